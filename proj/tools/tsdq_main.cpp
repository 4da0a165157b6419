#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsdq/config.hpp"
#include "tsdq/io.hpp"
#include "tsdq/pipeline.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  int workers = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Run configuration file");
  cmd->add_option("--set", opts.overrides, "Override a config key (key=value), repeatable");
  cmd->add_option("--seed", opts.seed, "Override the global seed");
  cmd->add_option("--workers", opts.workers, "Worker thread cap (env TSDQ_WORKERS as fallback)");
}

tsdq::RunConfig load_config(const CommonOpts& opts) {
  tsdq::RunConfig cfg = opts.config_path.empty() ? tsdq::RunConfig()
                                                 : tsdq::RunConfig::from_file(opts.config_path);
  cfg.apply_overrides(opts.overrides);
  if (opts.seed >= 0) cfg.set("seed", std::to_string(opts.seed));
  if (opts.workers >= 0) {
    cfg.set("workers", std::to_string(opts.workers));
  } else if (const char* env = std::getenv("TSDQ_WORKERS")) {
    cfg.set("workers", env);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tomoselfdeq: sparse-angle CT reconstruction toolkit"};
  app.require_subcommand(1);

  CommonOpts sim_opts, rec_opts, train_opts, verify_opts;
  std::string sim_out, rec_in, rec_out, rec_method, rec_checkpoint;
  std::string train_out, train_resume, verify_out;
  std::vector<std::string> eval_dirs;
  std::string eval_out;

  CLI::App* sim = app.add_subcommand("simulate", "Generate phantoms and measurements");
  add_common(sim, sim_opts);
  sim->add_option("--out", sim_out, "Output directory")->required();

  CLI::App* rec = app.add_subcommand("reconstruct", "Reconstruct simulated measurements");
  add_common(rec, rec_opts);
  rec->add_option("--method", rec_method, "fbp | tv | deq")->required();
  rec->add_option("--in", rec_in, "Simulation directory")->required();
  rec->add_option("--out", rec_out, "Output directory")->required();
  rec->add_option("--checkpoint", rec_checkpoint, "Denoiser checkpoint (deq)");

  CLI::App* tr = app.add_subcommand("train", "Train the equilibrium model");
  add_common(tr, train_opts);
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_option("--resume", train_resume, "Continue from a checkpoint");

  CLI::App* ver = app.add_subcommand("verify", "Run the verification suite");
  add_common(ver, verify_opts);
  ver->add_option("--out", verify_out, "Output directory")->required();

  CLI::App* ev = app.add_subcommand("evaluate", "Aggregate reconstruction metrics");
  ev->add_option("--out", eval_out, "Summary CSV path")->required();
  ev->add_option("dirs", eval_dirs, "Reconstruction directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tsdq::kExitUsage;
  }

  try {
    if (sim->parsed()) return tsdq::cmd_simulate(load_config(sim_opts), sim_out);
    if (rec->parsed()) {
      return tsdq::cmd_reconstruct(load_config(rec_opts), rec_method, rec_in, rec_out,
                                   rec_checkpoint);
    }
    if (tr->parsed()) return tsdq::cmd_train(load_config(train_opts), train_out, train_resume);
    if (ver->parsed()) return tsdq::cmd_verify(load_config(verify_opts), verify_out);
    if (ev->parsed()) return tsdq::cmd_evaluate(eval_dirs, eval_out);
  } catch (const tsdq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return tsdq::kExitUsage;
  } catch (const tsdq::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return tsdq::kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return tsdq::kExitUsage;
  } catch (const tsdq::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return tsdq::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return tsdq::kExitNumerical;
  }
  return tsdq::kExitUsage;
}
