#include "tsdq/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <thread>

namespace tsdq {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& RunConfig::schema() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"geometry.n_pixels", "32"},
      {"geometry.n_angles_total", "60"},
      {"geometry.n_detectors", "0"},  // 0: diagonal-covering odd default
      {"geometry.pixel_spacing", "1"},
      {"geometry.detector_spacing", "1"},
      {"sampling.kind", "uniform"},  // uniform | equispaced | complementary
      {"sampling.s", "12"},
      {"noise.relative_level", "0.01"},
      {"noise.seed", "1234"},
      {"deq.alpha", "0.5"},
      {"deq.gamma", "auto"},  // auto | auto-sq | positive number
      {"deq.gamma_scale", "1"},
      {"deq.s_ref", "0"},  // 0: validation angle count
      {"deq.fp_tol", "1e-3"},
      {"deq.fp_max_iter", "100"},
      {"deq.anderson", "off"},  // off | on
      {"deq.anderson_depth", "5"},
      {"deq.anderson_ridge", "1e-8"},
      {"deq.anderson_damping", "1"},
      {"deq.init", "zero"},  // zero | fbp
      {"denoiser.n_scales", "2"},
      {"denoiser.channels", "16"},
      {"denoiser.kernel_size", "3"},
      {"denoiser.activation", "leaky-relu"},  // relu | leaky-relu
      {"denoiser.leaky_slope", "0.1"},
      {"denoiser.use_skip", "true"},
      {"denoiser.sn_power_iters", "1"},
      {"denoiser.sn_side", "0"},  // 0: geometry.n_pixels
      {"train.loss", "self"},  // self | sup-operator | sup-plain (comma list sweeps)
      {"train.lr", "2e-4"},
      {"train.batch_size", "8"},
      {"train.n_epochs", "1"},
      {"train.optimizer", "adam"},  // adam | adam-polyak
      {"train.n_train", "24"},
      {"train.n_val", "8"},
      {"train.val_s", "0"},  // 0: sampling.s
      {"tv.lambda", "auto"},  // auto | positive number
      {"tv.lambda_lo", "1e-3"},
      {"tv.lambda_hi", "10"},
      {"tv.max_iters", "600"},
      {"tv.tol", "1e-9"},
      {"tv.step", "adaptive"},  // adaptive | positive tau
      {"phantom.kind", "random-ellipses"},  // shepp-logan | random-ellipses
      {"phantom.n_min", "2"},
      {"phantom.n_max", "6"},
      {"fbp.filter", "ram-lak"},  // ram-lak | shepp-logan | none
      {"simulate.n_items", "8"},
      {"pgm.lo", "0"},
      {"pgm.hi", "1"},
      {"verify.n_angles", "6"},
      {"verify.s", "2"},
      {"verify.image_side", "8"},
      {"verify.mc_draws", "10000"},
      {"verify.prop2_mc_draws", "1000000"},
      {"verify.denoiser_seeds", "10"},
      {"verify.noise_level", "0.01"},
      {"seed", "0"},
      {"workers", "0"},  // 0: hardware concurrency
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& [key, value] : schema()) values_[key] = value;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  try {
    return from_text(os.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

void RunConfig::apply_overrides(const std::vector<std::string>& key_value_pairs) {
  for (const auto& kv : key_value_pairs) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const long long r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& [key, value] : values_) os << key << " = " << value << "\n";
  return os.str();
}

void RunConfig::write_resolved(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write resolved config to " + path);
  f << resolved_text();
}

Geometry RunConfig::geometry() const {
  return make_geometry(static_cast<int>(get_int("geometry.n_pixels")),
                       static_cast<int>(get_int("geometry.n_angles_total")),
                       static_cast<int>(get_int("geometry.n_detectors")),
                       get_double("geometry.pixel_spacing"),
                       get_double("geometry.detector_spacing"));
}

MaskDistribution RunConfig::sampling() const {
  MaskDistribution d;
  const std::string kind = get("sampling.kind");
  if (kind == "uniform") d.kind = MaskKind::kUniformSubset;
  else if (kind == "equispaced") d.kind = MaskKind::kEquispacedFixed;
  else if (kind == "complementary") d.kind = MaskKind::kComplementarySplit;
  else throw ConfigError("sampling.kind: unknown value '" + kind + "'");
  d.s = static_cast<int>(get_int("sampling.s"));
  d.n_angles_total = static_cast<int>(get_int("geometry.n_angles_total"));
  d.validate();
  return d;
}

NoiseConfig RunConfig::noise() const {
  NoiseConfig n;
  n.relative_level = get_double("noise.relative_level");
  n.seed = static_cast<std::uint64_t>(get_int("noise.seed"));
  n.validate();
  return n;
}

DEQConfig RunConfig::deq() const {
  DEQConfig d;
  d.alpha = get_double("deq.alpha");
  const std::string gamma = get("deq.gamma");
  if (gamma == "auto") {
    d.gamma_mode = GammaMode::kAutoInverseNorm;
  } else if (gamma == "auto-sq") {
    d.gamma_mode = GammaMode::kAutoInverseNormSq;
  } else {
    d.gamma_mode = GammaMode::kFixed;
    try {
      d.gamma = std::stod(gamma);
    } catch (const std::exception&) {
      throw ConfigError("deq.gamma: expected auto, auto-sq or a number, got '" + gamma + "'");
    }
  }
  d.gamma_scale = get_double("deq.gamma_scale");
  d.s_ref = static_cast<int>(get_int("deq.s_ref"));
  if (d.s_ref == 0) {
    d.s_ref = static_cast<int>(get_int("train.val_s"));
    if (d.s_ref == 0) d.s_ref = static_cast<int>(get_int("sampling.s"));
  }
  d.fp_tol = get_double("deq.fp_tol");
  d.fp_max_iter = static_cast<int>(get_int("deq.fp_max_iter"));
  const std::string anderson = get("deq.anderson");
  if (anderson == "on") d.anderson.enabled = true;
  else if (anderson == "off") d.anderson.enabled = false;
  else throw ConfigError("deq.anderson: expected on or off");
  d.anderson.depth = static_cast<int>(get_int("deq.anderson_depth"));
  d.anderson.ridge = get_double("deq.anderson_ridge");
  d.anderson.damping = get_double("deq.anderson_damping");
  const std::string init = get("deq.init");
  if (init == "zero") d.init = InitPolicy::kZero;
  else if (init == "fbp") d.init = InitPolicy::kFbp;
  else throw ConfigError("deq.init: expected zero or fbp");
  return d;
}

DenoiserSpec RunConfig::denoiser() const {
  DenoiserSpec s;
  s.n_scales = static_cast<int>(get_int("denoiser.n_scales"));
  s.channels = static_cast<int>(get_int("denoiser.channels"));
  s.kernel_size = static_cast<int>(get_int("denoiser.kernel_size"));
  const std::string act = get("denoiser.activation");
  if (act == "relu") s.activation = Activation::kRelu;
  else if (act == "leaky-relu") s.activation = Activation::kLeakyRelu;
  else throw ConfigError("denoiser.activation: expected relu or leaky-relu");
  s.leaky_slope = get_double("denoiser.leaky_slope");
  s.use_skip = get_bool("denoiser.use_skip");
  s.sn_power_iters = static_cast<int>(get_int("denoiser.sn_power_iters"));
  s.sn_side = static_cast<int>(get_int("denoiser.sn_side"));
  if (s.sn_side == 0) s.sn_side = static_cast<int>(get_int("geometry.n_pixels"));
  s.validate();
  return s;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  const std::string loss = get("train.loss");
  if (loss == "self") t.loss_kind = LossKind::kSelfWeighted;
  else if (loss == "sup-operator") t.loss_kind = LossKind::kSupOperator;
  else if (loss == "sup-plain") t.loss_kind = LossKind::kSupPlain;
  else throw ConfigError("train.loss: unknown value '" + loss + "'");
  t.lr = get_double("train.lr");
  t.batch_size = static_cast<int>(get_int("train.batch_size"));
  t.n_epochs = static_cast<int>(get_int("train.n_epochs"));
  const std::string opt = get("train.optimizer");
  if (opt == "adam") t.optimizer = OptimizerKind::kAdam;
  else if (opt == "adam-polyak") t.optimizer = OptimizerKind::kAdamPolyak;
  else throw ConfigError("train.optimizer: expected adam or adam-polyak");
  t.deq = deq();
  t.sampling = sampling();
  t.noise = noise();
  t.seed = seed();
  t.val_count = static_cast<int>(get_int("train.n_val"));
  t.val_s = static_cast<int>(get_int("train.val_s"));
  if (t.val_s == 0) t.val_s = t.sampling.s;
  t.validate();
  return t;
}

TVConfig RunConfig::tv() const {
  TVConfig c;
  const std::string lambda = get("tv.lambda");
  c.lambda = lambda == "auto" ? 0.0 : get_double("tv.lambda");
  c.max_iters = static_cast<int>(get_int("tv.max_iters"));
  c.tol = get_double("tv.tol");
  const std::string step = get("tv.step");
  if (step == "adaptive") {
    c.step_rule = TVStepRule::kAdaptive;
  } else {
    c.step_rule = TVStepRule::kFixed;
    try {
      c.tau = std::stod(step);
    } catch (const std::exception&) {
      throw ConfigError("tv.step: expected adaptive or a number");
    }
  }
  return c;
}

PhantomSpec RunConfig::phantom(std::uint64_t seed_offset) const {
  PhantomSpec p;
  const std::string kind = get("phantom.kind");
  if (kind == "shepp-logan") p.kind = PhantomKind::kSheppLogan;
  else if (kind == "random-ellipses") p.kind = PhantomKind::kRandomEllipses;
  else throw ConfigError("phantom.kind: unknown value '" + kind + "'");
  p.side = static_cast<int>(get_int("geometry.n_pixels"));
  p.seed = seed() + seed_offset;
  p.n_min = static_cast<int>(get_int("phantom.n_min"));
  p.n_max = static_cast<int>(get_int("phantom.n_max"));
  p.validate();
  return p;
}

FbpFilter RunConfig::fbp_filter() const {
  const std::string f = get("fbp.filter");
  if (f == "ram-lak") return FbpFilter::kRamLak;
  if (f == "shepp-logan") return FbpFilter::kSheppLogan;
  if (f == "none") return FbpFilter::kNone;
  throw ConfigError("fbp.filter: unknown value '" + f + "'");
}

std::uint64_t RunConfig::seed() const {
  return static_cast<std::uint64_t>(get_int("seed"));
}

int RunConfig::workers() const {
  const int w = static_cast<int>(get_int("workers"));
  if (w > 0) return w;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace tsdq
