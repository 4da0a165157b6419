#include "tsdq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "tsdq/classical.hpp"
#include "tsdq/csv.hpp"
#include "tsdq/io.hpp"
#include "tsdq/metrics.hpp"
#include "tsdq/parallel.hpp"
#include "tsdq/verify.hpp"

namespace tsdq {

namespace fs = std::filesystem;

namespace {

std::string item_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.tsdq", prefix, i);
  return buf;
}

double image_max(const Image& img) {
  double m = 0.0;
  for (double v : img.data) m = std::max(m, v);
  return m;
}

struct ManifestEntry {
  int id = 0;
  AngleMask mask;
  double sigma = 0.0;
  std::string gt_path, full_path, meas_path;
};

std::vector<ManifestEntry> read_manifest(const std::string& dir, Geometry* g) {
  const CsvTable t = read_csv(dir + "/manifest.csv");
  const int c_id = t.column("id");
  const int c_mask = t.column("mask");
  const int c_sigma = t.column("sigma");
  const int c_gt = t.column("gt");
  const int c_meas = t.column("meas");
  const int c_full = t.column("full");
  const int c_n_angles = t.column("n_angles_total");
  if (c_id < 0 || c_mask < 0 || c_gt < 0 || c_meas < 0 || c_n_angles < 0) {
    throw IoError(IoErrorKind::kBadHeader, dir + "/manifest.csv: missing required columns");
  }
  std::vector<ManifestEntry> out;
  for (const auto& row : t.rows) {
    ManifestEntry e;
    e.id = std::stoi(row[static_cast<std::size_t>(c_id)]);
    const int n_angles = std::stoi(row[static_cast<std::size_t>(c_n_angles)]);
    e.mask = mask_from_csv_field(row[static_cast<std::size_t>(c_mask)], n_angles);
    e.sigma = c_sigma >= 0 ? std::stod(row[static_cast<std::size_t>(c_sigma)]) : 0.0;
    e.gt_path = dir + "/" + row[static_cast<std::size_t>(c_gt)];
    e.meas_path = dir + "/" + row[static_cast<std::size_t>(c_meas)];
    if (c_full >= 0) e.full_path = dir + "/" + row[static_cast<std::size_t>(c_full)];
    out.push_back(std::move(e));
  }
  (void)g;
  return out;
}

std::vector<Image> build_dataset(const RunConfig& cfg, int count, std::uint64_t offset) {
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(generate_phantom(cfg.phantom(offset + static_cast<std::uint64_t>(i))));
  }
  return out;
}

// Held-out phantom for the TV lambda grid search, distinct from every
// simulated/training item.
constexpr std::uint64_t kHoldoutOffset = 1000000;

}  // namespace

int cmd_simulate(const RunConfig& cfg, const std::string& out_dir) {
  set_max_workers(cfg.workers());
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir + "/resolved.cfg");

  const Geometry g = cfg.geometry();
  const MaskDistribution dist = cfg.sampling();
  const NoiseConfig noise = cfg.noise();
  const int n_items = static_cast<int>(cfg.get_int("simulate.n_items"));
  RngStream root(noise.seed);

  CsvWriter manifest({"id", "kind", "side", "n_angles_total", "n_detectors", "s", "mask",
                      "noise_level", "sigma", "gt", "full", "meas"});
  for (int i = 0; i < n_items; ++i) {
    const Image phantom = generate_phantom(cfg.phantom(static_cast<std::uint64_t>(i)));
    const Sinogram full = radon_forward(phantom, g);
    RngStream rng = root.fork(static_cast<std::uint64_t>(i));
    const AngleMask mask = sample_mask(dist, rng);
    Sinogram meas = apply_mask(full, mask);
    double peak = 0.0;
    for (double v : full.data) peak = std::max(peak, std::abs(v));
    const double sigma = noise.relative_level * peak;
    if (sigma > 0.0) {
      for (auto& v : meas.data) v += sigma * rng.next_gaussian();
    }
    const std::string gt = item_name("gt", i);
    const std::string fu = item_name("full", i);
    const std::string me = item_name("meas", i);
    write_container(out_dir + "/" + gt, phantom);
    write_container(out_dir + "/" + fu, full);
    write_container(out_dir + "/" + me, meas);
    manifest.add_row({std::to_string(i), cfg.get("phantom.kind"), std::to_string(g.n_pixels),
                      std::to_string(g.n_angles_total), std::to_string(g.n_detectors),
                      std::to_string(mask.count()), mask.to_csv_field(),
                      format_double(noise.relative_level), format_double(sigma), gt, fu, me});
  }
  manifest.write(out_dir + "/manifest.csv");
  return kExitOk;
}

int cmd_reconstruct(const RunConfig& cfg, const std::string& method, const std::string& in_dir,
                    const std::string& out_dir, const std::string& checkpoint_path) {
  set_max_workers(cfg.workers());
  if (method != "fbp" && method != "tv" && method != "deq") {
    std::cerr << "reconstruct: unknown method '" << method << "'\n";
    return kExitUsage;
  }
  const Geometry g = cfg.geometry();
  Geometry manifest_geometry = g;
  const std::vector<ManifestEntry> entries = read_manifest(in_dir, &manifest_geometry);
  if (entries.empty()) {
    std::cerr << "reconstruct: no entries in " << in_dir << "/manifest.csv\n";
    return kExitUsage;
  }
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir + "/resolved.cfg");

  Checkpoint ckpt;
  DEQConfig deq_cfg;
  if (method == "deq") {
    if (checkpoint_path.empty()) {
      std::cerr << "reconstruct: method deq requires --checkpoint\n";
      return kExitUsage;
    }
    ckpt = read_checkpoint(checkpoint_path);
    deq_cfg = resolve_gamma(cfg.deq(), g);
  }

  // One lambda per (s, noise) setting, tuned on a held-out phantom with the
  // same acquisition protocol as the first entry.
  TVConfig tv_cfg = cfg.tv();
  if (method == "tv" && tv_cfg.lambda == 0.0) {
    const Image holdout = generate_phantom(cfg.phantom(kHoldoutOffset));
    const Sinogram full = radon_forward(holdout, g);
    Sinogram y = apply_mask(full, entries.front().mask);
    if (entries.front().sigma > 0.0) {
      RngStream rng = RngStream(cfg.noise().seed).fork(kHoldoutOffset);
      for (auto& v : y.data) v += entries.front().sigma * rng.next_gaussian();
    }
    tv_cfg.lambda = 1.0;  // placeholder; grid search assigns the final value
    tv_cfg.lambda = tune_tv_lambda(holdout, y, entries.front().mask, g, tv_cfg,
                                   cfg.get_double("tv.lambda_lo"),
                                   cfg.get_double("tv.lambda_hi"));
  }

  const double pgm_lo = cfg.get_double("pgm.lo");
  const double pgm_hi = cfg.get_double("pgm.hi");
  CsvWriter metrics({"id", "method", "s", "psnr", "ssim"});
  for (const ManifestEntry& e : entries) {
    const Sinogram y = read_sinogram(e.meas_path);
    Image recon;
    if (method == "fbp") {
      recon = fbp(y, e.mask, g, cfg.fbp_filter());
    } else if (method == "tv") {
      recon = tv_reconstruct(y, e.mask, g, tv_cfg).x;
    } else {
      recon = fixed_point_solve(y, e.mask, ckpt.params, deq_cfg, g).x_bar;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "recon_%04d", e.id);
    write_container(out_dir + "/" + buf + ".tsdq", recon);
    export_pgm(recon, out_dir + "/" + std::string(buf) + ".pgm", pgm_lo, pgm_hi);
    const Image gt = read_image(e.gt_path);
    const double range = std::max(image_max(gt), 1e-12);
    metrics.add_row({std::to_string(e.id), method, std::to_string(e.mask.count()),
                     format_double(psnr(recon, gt, range)),
                     format_double(ssim(recon, gt, range))});
  }
  metrics.write(out_dir + "/metrics.csv");
  return kExitOk;
}

namespace {

std::vector<LossKind> parse_loss_list(const std::string& spec) {
  std::vector<LossKind> kinds;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "self") kinds.push_back(LossKind::kSelfWeighted);
    else if (tok == "sup-operator") kinds.push_back(LossKind::kSupOperator);
    else if (tok == "sup-plain") kinds.push_back(LossKind::kSupPlain);
    else throw ConfigError("train.loss: unknown value '" + tok + "'");
  }
  if (kinds.empty()) throw ConfigError("train.loss: empty");
  return kinds;
}

}  // namespace

int cmd_train(const RunConfig& cfg, const std::string& out_dir, const std::string& resume_path) {
  set_max_workers(cfg.workers());
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir + "/resolved.cfg");

  const Geometry g = cfg.geometry();
  const TrainConfig base = cfg.train();
  const DenoiserSpec spec = cfg.denoiser();
  const std::vector<LossKind> kinds = parse_loss_list(cfg.get("train.loss"));
  if (kinds.size() > 1 && !resume_path.empty()) {
    std::cerr << "train: cannot resume a loss sweep\n";
    return kExitUsage;
  }
  const int n_total = static_cast<int>(cfg.get_int("train.n_train")) + base.val_count;
  const std::vector<Image> dataset = build_dataset(cfg, n_total, 0);

  for (LossKind kind : kinds) {
    TrainConfig t = base;
    t.loss_kind = kind;
    TrainResult result;
    int first_epoch = 0;
    if (!resume_path.empty()) {
      Checkpoint ck = read_checkpoint(resume_path);
      first_epoch = ck.epochs_done;
      result = train_from(dataset, t, g, std::move(ck.params), std::move(ck.adam), first_epoch);
    } else {
      result = train(dataset, t, g, spec);
    }
    const std::string tag = kinds.size() > 1 ? "_" + loss_kind_name(kind) : "";
    Checkpoint out_ck;
    out_ck.params = result.params;
    out_ck.epochs_done = first_epoch + t.n_epochs;
    out_ck.has_adam = false;
    write_checkpoint(out_dir + "/checkpoint" + tag + ".tsdn", out_ck);
    write_history_csv(result.history, out_dir + "/history" + tag + ".csv");
  }
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg, const std::string& out_dir) {
  set_max_workers(cfg.workers());
  fs::create_directories(out_dir);
  cfg.write_resolved(out_dir + "/resolved.cfg");

  const int side = static_cast<int>(cfg.get_int("verify.image_side"));
  const int n_angles = static_cast<int>(cfg.get_int("verify.n_angles"));
  const int s = static_cast<int>(cfg.get_int("verify.s"));
  const Geometry g = make_geometry(side, n_angles);
  MaskDistribution dist;
  dist.kind = MaskKind::kUniformSubset;
  dist.s = s;
  dist.n_angles_total = n_angles;
  const std::uint64_t seed = cfg.seed();

  std::vector<VerificationReport> reports;
  reports.push_back(verify_prop1(g, dist, VerifyMode::kExact));
  reports.push_back(verify_prop1(g, dist, VerifyMode::kMonteCarlo,
                                 cfg.get_int("verify.mc_draws"), seed + 1));
  reports.push_back(verify_prop2(dist, VerifyMode::kExact));
  reports.push_back(verify_prop2(dist, VerifyMode::kMonteCarlo,
                                 cfg.get_int("verify.prop2_mc_draws"), seed + 2));

  Thm1Options opts;
  opts.deq.alpha = 0.5;
  opts.deq.gamma_mode = GammaMode::kAutoInverseNormSq;
  opts.deq.s_ref = s;
  opts.noise_sigma = cfg.get_double("verify.noise_level");

  DenoiserSpec dspec;
  dspec.n_scales = 1;
  dspec.channels = 4;
  dspec.kernel_size = 3;
  dspec.sn_side = side;
  PhantomSpec ph;
  ph.kind = PhantomKind::kSheppLogan;
  ph.side = side;
  const std::vector<Image> x_set = {generate_phantom(ph)};

  const int n_seeds = static_cast<int>(cfg.get_int("verify.denoiser_seeds"));
  for (int k = 0; k < n_seeds; ++k) {
    DenoiserParams p = init_denoiser(dspec, seed + 100 + static_cast<std::uint64_t>(k));
    spectral_normalize(p, 5);
    VerificationReport r = verify_thm1(g, dist, p, x_set, VerifyMode::kExact, opts);
    r.details += "; denoiser seed " + std::to_string(k);
    reports.push_back(std::move(r));
  }
  {
    DenoiserParams p = init_denoiser(dspec, seed + 100);
    spectral_normalize(p, 5);
    reports.push_back(verify_thm1(g, dist, p, x_set, VerifyMode::kMonteCarlo, opts));
  }
  for (auto& r : gradcheck_all(seed)) reports.push_back(std::move(r));

  write_reports_csv(reports, out_dir + "/reports.csv");
  write_reports_text(reports, out_dir + "/reports.txt");
  bool all_passed = true;
  for (const auto& r : reports) {
    std::cout << report_line(r) << "\n";
    all_passed = all_passed && r.passed;
  }
  return all_passed ? kExitOk : kExitVerifyFailed;
}

int cmd_evaluate(const std::vector<std::string>& recon_dirs, const std::string& out_csv) {
  if (recon_dirs.empty()) {
    std::cerr << "evaluate: no input directories\n";
    return kExitUsage;
  }
  struct Group {
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    long n = 0;
  };
  std::map<std::pair<std::string, int>, Group> groups;
  for (const std::string& dir : recon_dirs) {
    const std::string path = dir + "/metrics.csv";
    if (!fs::exists(path)) {
      std::cerr << "evaluate: missing " << path << "\n";
      return kExitUsage;
    }
    const CsvTable t = read_csv(path);
    const int c_method = t.column("method");
    const int c_s = t.column("s");
    const int c_psnr = t.column("psnr");
    const int c_ssim = t.column("ssim");
    if (c_method < 0 || c_s < 0 || c_psnr < 0 || c_ssim < 0) {
      std::cerr << "evaluate: malformed " << path << "\n";
      return kExitUsage;
    }
    if (t.rows.empty()) {
      std::cerr << "evaluate: no rows in " << path << "\n";
      return kExitUsage;
    }
    for (const auto& row : t.rows) {
      Group& grp = groups[{row[static_cast<std::size_t>(c_method)],
                           std::stoi(row[static_cast<std::size_t>(c_s)])}];
      grp.psnr_sum += std::stod(row[static_cast<std::size_t>(c_psnr)]);
      grp.ssim_sum += std::stod(row[static_cast<std::size_t>(c_ssim)]);
      grp.n += 1;
    }
  }
  CsvWriter summary({"method", "s", "n", "mean_psnr", "mean_ssim"});
  for (const auto& [key, grp] : groups) {
    summary.add_row({key.first, std::to_string(key.second), std::to_string(grp.n),
                     format_double(grp.psnr_sum / static_cast<double>(grp.n)),
                     format_double(grp.ssim_sum / static_cast<double>(grp.n))});
  }
  summary.write(out_csv);
  return kExitOk;
}

}  // namespace tsdq
