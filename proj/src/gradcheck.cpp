#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "tsdq/deq.hpp"
#include "tsdq/radon.hpp"
#include "tsdq/training.hpp"
#include "tsdq/verify.hpp"

// Finite-difference and dense-matrix oracles for every derivative path in
// the toolkit. Each check is independent of the implementation it probes.

namespace tsdq {

namespace {

constexpr double kFdStep = 1e-6;

VerificationReport make_report(const std::string& name, double rel, double tol,
                               std::int64_t n = 0) {
  VerificationReport r;
  r.claim_id = "gradcheck";
  r.mode = VerifyMode::kExact;
  r.n_draws = n;
  r.rel_error = rel;
  r.max_abs_error = rel;
  r.tolerance = tol;
  r.passed = rel <= tol;
  r.details = name;
  return r;
}

Image random_image(int side, RngStream& rng, bool nonneg = false) {
  Image x(side);
  for (auto& v : x.data) v = nonneg ? rng.next_double() : rng.next_gaussian();
  return x;
}

// Guarded relative error: components far below the gradient scale are
// measured against that scale instead of themselves.
double fd_rel_error(double analytic, double numeric, double scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6 * scale, 1e-300});
  return std::abs(analytic - numeric) / denom;
}

VerificationReport check_adjoint_identity(std::uint64_t seed) {
  const Geometry g = make_geometry(16, 12);
  const AngleMask mask = full_mask(g.n_angles_total);
  RngStream rng = RngStream(seed).fork(1);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Image x = random_image(16, rng);
    Sinogram y(mask.count(), g.n_detectors);
    for (auto& v : y.data) v = rng.next_gaussian();
    Sinogram ax = radon_forward_masked(x, mask, g);
    Image aty = radon_adjoint_masked(y, mask, g);
    const double lhs = dot(ax.data, y.data);
    const double rhs = dot(x.data, aty.data);
    const double denom = std::max(norm2(ax.data) * norm2(y.data), 1e-300);
    worst = std::max(worst, std::abs(lhs - rhs) / denom);
  }
  return make_report("adjoint identity <Ax,y> = <x,A^T y>", worst, 1e-10, 20);
}

VerificationReport check_spectral_vs_svd(std::uint64_t seed) {
  const Geometry g = make_geometry(32, 60);
  const AngleMask mask = equispaced_mask(12, 60);
  const SpectralNormResult est = spectral_norm(masked_radon_operator(mask, g), 1e-9, 5000, seed);
  int rows = 0, cols = 0;
  std::vector<double> a = materialize_dense(mask, g, &rows, &cols);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(
      a.data(), rows, cols);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  const double exact = svd.singularValues()(0);
  const double rel = std::abs(est.value - exact) / exact;
  return make_report("spectral norm vs dense SVD (32x32, 12/60 angles)", rel, 1e-4);
}

// Independent network forward built from naive per-pixel convolutions.
namespace naive {

std::vector<double> conv(const ConvLayer& L, const std::vector<double>& in, int side) {
  const int k = L.ksize;
  const int r = k / 2;
  std::vector<double> out(static_cast<std::size_t>(L.out_ch) * side * side);
  for (int oc = 0; oc < L.out_ch; ++oc) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        double acc = L.bias[static_cast<std::size_t>(oc)];
        for (int ic = 0; ic < L.in_ch; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int yy = y + ky - r;
              const int xx = x + kx - r;
              if (yy < 0 || yy >= side || xx < 0 || xx >= side) continue;
              acc += L.kernel[((static_cast<std::size_t>(oc) * L.in_ch + ic) * k + ky) * k + kx] *
                     in[(static_cast<std::size_t>(ic) * side + yy) * side + xx];
            }
          }
        }
        out[(static_cast<std::size_t>(oc) * side + y) * side + x] = acc;
      }
    }
  }
  return out;
}

std::vector<double> act(const DenoiserSpec& s, std::vector<double> v) {
  const double a = s.activation == Activation::kRelu ? 0.0 : s.leaky_slope;
  for (auto& e : v) e = e > 0.0 ? e : a * e;
  return v;
}

std::vector<double> pool(const std::vector<double>& in, int ch, int side) {
  const int h = side / 2;
  std::vector<double> out(static_cast<std::size_t>(ch) * h * h);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < h; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            acc += in[(static_cast<std::size_t>(c) * side + 2 * y + dy) * side + 2 * x + dx];
          }
        }
        out[(static_cast<std::size_t>(c) * h + y) * h + x] = 0.25 * acc;
      }
    }
  }
  return out;
}

std::vector<double> up(const std::vector<double>& in, int ch, int h) {
  const int side = 2 * h;
  std::vector<double> out(static_cast<std::size_t>(ch) * side * side);
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        out[(static_cast<std::size_t>(c) * side + y) * side + x] =
            in[(static_cast<std::size_t>(c) * h + y / 2) * h + x / 2];
      }
    }
  }
  return out;
}

Image forward(const DenoiserParams& p, const Image& x) {
  const DenoiserSpec& s = p.spec;
  const int n = x.side;
  std::vector<double> out;
  if (s.n_scales == 1) {
    auto h0 = act(s, conv(p.layers[0], x.data, n));
    auto h1 = act(s, conv(p.layers[1], h0, n));
    out = conv(p.layers[2], h1, n);
  } else {
    auto h0 = act(s, conv(p.layers[0], x.data, n));
    auto pooled = pool(h0, s.channels, n);
    auto h1 = act(s, conv(p.layers[1], pooled, n / 2));
    auto u = up(h1, s.channels, n / 2);
    std::vector<double> cat = h0;
    cat.insert(cat.end(), u.begin(), u.end());
    auto h2 = act(s, conv(p.layers[2], cat, n));
    out = conv(p.layers[3], h2, n);
  }
  Image y(n);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    y.data[i] = (s.use_skip ? x.data[i] : 0.0) + out[i];
  }
  return y;
}

}  // namespace naive

DenoiserParams small_denoiser(int n_scales, std::uint64_t seed) {
  DenoiserSpec spec;
  spec.n_scales = n_scales;
  spec.channels = 3;
  spec.kernel_size = 3;
  spec.use_skip = true;
  spec.sn_side = 16;
  return init_denoiser(spec, seed);
}

VerificationReport check_conv_vs_dense(std::uint64_t seed) {
  RngStream rng = RngStream(seed).fork(2);
  double worst = 0.0;
  for (int scales = 1; scales <= 2; ++scales) {
    DenoiserParams p = small_denoiser(scales, seed + static_cast<std::uint64_t>(scales));
    for (auto& L : p.layers) {
      for (auto& b : L.bias) b = 0.1 * rng.next_gaussian();
    }
    Image x = random_image(16, rng);
    Image fast = denoiser_forward(p, x);
    Image slow = naive::forward(p, x);
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < fast.data.size(); ++i) {
      scale = std::max(scale, std::abs(slow.data[i]));
      diff = std::max(diff, std::abs(fast.data[i] - slow.data[i]));
    }
    worst = std::max(worst, diff / std::max(scale, 1e-300));
  }
  return make_report("denoiser forward vs naive dense convolution", worst, 1e-12);
}

double vjp_scale(const DenoiserGrads& g) { return std::max(g.max_abs(), 1e-300); }

VerificationReport check_vjp_params(std::uint64_t seed, int corrupt_layer) {
  RngStream rng = RngStream(seed).fork(3);
  double worst = 0.0;
  std::string worst_layer = "none";
  for (int scales = 1; scales <= 2; ++scales) {
    DenoiserParams p = small_denoiser(scales, seed + 11 * static_cast<std::uint64_t>(scales));
    Image x = random_image(16, rng);
    Image cot = random_image(16, rng);
    DenoiserVjpResult vjp = denoiser_vjp(p, x, cot);
    if (corrupt_layer >= 0 && corrupt_layer < static_cast<int>(vjp.param_grads.kernel.size())) {
      for (auto& v : vjp.param_grads.kernel[static_cast<std::size_t>(corrupt_layer)]) v = -v;
    }
    const double scale = vjp_scale(vjp.param_grads);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (int probe = 0; probe < 5; ++probe) {
        const bool do_bias = probe == 4;
        auto& tensor = do_bias ? p.layers[l].bias : p.layers[l].kernel;
        const std::size_t idx = rng.next_below(tensor.size());
        const double saved = tensor[idx];
        tensor[idx] = saved + kFdStep;
        const Image up_img = denoiser_forward(p, x);
        tensor[idx] = saved - kFdStep;
        const Image dn_img = denoiser_forward(p, x);
        tensor[idx] = saved;
        const double fd = (dot(cot.data, up_img.data) - dot(cot.data, dn_img.data)) /
                          (2.0 * kFdStep);
        const double analytic = do_bias ? vjp.param_grads.bias[l][idx]
                                        : vjp.param_grads.kernel[l][idx];
        const double rel = fd_rel_error(analytic, fd, scale);
        if (rel > worst) {
          worst = rel;
          worst_layer = "layer " + std::to_string(l) + (do_bias ? " bias" : " kernel") +
                        " (scales=" + std::to_string(scales) + ")";
        }
      }
    }
  }
  return make_report("denoiser VJP parameter grads vs central differences; worst at " +
                         worst_layer,
                     worst, 1e-5);
}

VerificationReport check_vjp_input(std::uint64_t seed) {
  RngStream rng = RngStream(seed).fork(4);
  double worst = 0.0;
  for (int scales = 1; scales <= 2; ++scales) {
    DenoiserParams p = small_denoiser(scales, seed + 17 * static_cast<std::uint64_t>(scales));
    Image x = random_image(16, rng);
    Image cot = random_image(16, rng);
    DenoiserVjpResult vjp = denoiser_vjp(p, x, cot);
    double scale = 1e-300;
    for (double v : vjp.input_grad.data) scale = std::max(scale, std::abs(v));
    for (int probe = 0; probe < 20; ++probe) {
      const std::size_t idx = rng.next_below(x.data.size());
      const double saved = x.data[idx];
      x.data[idx] = saved + kFdStep;
      const Image up_img = denoiser_forward(p, x);
      x.data[idx] = saved - kFdStep;
      const Image dn_img = denoiser_forward(p, x);
      x.data[idx] = saved;
      const double fd =
          (dot(cot.data, up_img.data) - dot(cot.data, dn_img.data)) / (2.0 * kFdStep);
      worst = std::max(worst, fd_rel_error(vjp.input_grad.data[idx], fd, scale));
    }
  }
  return make_report("denoiser VJP input grad vs central differences", worst, 1e-5);
}

struct LossProbe {
  std::string name;
  std::function<LossEval(const Image&)> eval;
};

VerificationReport check_loss_cotangent(const LossProbe& probe, std::uint64_t seed) {
  RngStream rng = RngStream(seed).fork(5);
  Image x = random_image(16, rng, true);
  const LossEval base = probe.eval(x);
  double scale = 1e-300;
  for (double v : base.cotangent.data) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (int probe_i = 0; probe_i < 10; ++probe_i) {
    const std::size_t idx = rng.next_below(x.data.size());
    const double saved = x.data[idx];
    x.data[idx] = saved + kFdStep;
    const double up_v = probe.eval(x).value;
    x.data[idx] = saved - kFdStep;
    const double dn_v = probe.eval(x).value;
    x.data[idx] = saved;
    const double fd = (up_v - dn_v) / (2.0 * kFdStep);
    worst = std::max(worst, fd_rel_error(base.cotangent.data[idx], fd, scale));
  }
  return make_report(probe.name + " cotangent vs central differences", worst, 1e-6);
}

VerificationReport check_grad_fidelity(std::uint64_t seed) {
  const Geometry g = make_geometry(16, 20);
  const AngleMask mask = equispaced_mask(10, 20);
  RngStream rng = RngStream(seed).fork(6);
  Image x = random_image(16, rng, true);
  Sinogram y(mask.count(), g.n_detectors);
  for (auto& v : y.data) v = rng.next_gaussian();
  const Image grad = grad_data_fidelity(x, y, mask, g);
  const auto objective = [&](const Image& xi) {
    Sinogram r = radon_forward_masked(xi, mask, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < r.data.size(); ++i) {
      const double d = r.data[i] - y.data[i];
      acc += 0.5 * d * d;
    }
    return acc;
  };
  double worst = 0.0;
  for (int dir = 0; dir < 5; ++dir) {
    Image d = random_image(16, rng);
    const double nd = norm2(d.data);
    for (auto& v : d.data) v /= nd;
    Image xp = x, xm = x;
    axpy(kFdStep, d.data, xp.data);
    axpy(-kFdStep, d.data, xm.data);
    const double fd = (objective(xp) - objective(xm)) / (2.0 * kFdStep);
    const double analytic = dot(grad.data, d.data);
    worst = std::max(worst, std::abs(fd - analytic) /
                                std::max({std::abs(fd), std::abs(analytic), 1e-300}));
  }
  return make_report("data-fidelity gradient vs directional differences", worst, 1e-6);
}

VerificationReport check_depth1_jfb(std::uint64_t seed) {
  const Geometry g = make_geometry(16, 20);
  RngStream rng = RngStream(seed).fork(7);
  DenoiserParams p = small_denoiser(2, seed + 29);
  Image x = random_image(16, rng, true);

  MaskDistribution dist;
  dist.kind = MaskKind::kUniformSubset;
  dist.s = 10;
  dist.n_angles_total = 20;
  NoiseConfig noise;
  noise.relative_level = 0.0;
  RngStream pair_rng = rng.fork(1);
  MeasurementPair pair = make_training_pair(x, g, dist, noise, pair_rng);
  pair.ground_truth = x;

  TrainConfig cfg;
  cfg.sampling = dist;
  cfg.noise = noise;
  cfg.deq.alpha = 0.5;
  cfg.deq.gamma_mode = GammaMode::kAutoInverseNormSq;
  cfg.deq.s_ref = dist.s;
  cfg.deq.fp_max_iter = 1;  // one explicit layer
  cfg.deq = resolve_gamma(cfg.deq, g);
  const WeightDiagonal w = compute_weight_diagonal(dist);

  double worst = 0.0;
  for (LossKind kind : {LossKind::kSelfWeighted, LossKind::kSupOperator, LossKind::kSupPlain}) {
    cfg.loss_kind = kind;
    // The solver output x0_bar is frozen: the JFB estimate is then the
    // exact gradient of theta -> L(T_theta(x0_bar)).
    const FixedPointResult fp = fixed_point_solve(pair.y, pair.mask, p, cfg.deq, g);
    const JfbBatchResult jfb = jfb_gradient({pair}, p, cfg, g);
    const auto loss_at = [&](const DenoiserParams& params) {
      const Image x_hat = apply_t_theta(fp.x_bar, pair.y, pair.mask, params, cfg.deq, g);
      switch (kind) {
        case LossKind::kSelfWeighted: return loss_self(x_hat, pair, w, g).value;
        case LossKind::kSupOperator: return loss_sup_operator(x_hat, x, g).value;
        case LossKind::kSupPlain: return loss_sup_plain(x_hat, x).value;
      }
      return 0.0;
    };
    const double scale = vjp_scale(jfb.grads);
    RngStream coord_rng = rng.fork(static_cast<std::uint64_t>(kind) + 10);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (int probe = 0; probe < 2; ++probe) {
        const std::size_t idx = coord_rng.next_below(p.layers[l].kernel.size());
        const double saved = p.layers[l].kernel[idx];
        p.layers[l].kernel[idx] = saved + kFdStep;
        const double up_v = loss_at(p);
        p.layers[l].kernel[idx] = saved - kFdStep;
        const double dn_v = loss_at(p);
        p.layers[l].kernel[idx] = saved;
        const double fd = (up_v - dn_v) / (2.0 * kFdStep);
        worst = std::max(worst, fd_rel_error(jfb.grads.kernel[l][idx], fd, scale));
      }
    }
  }
  return make_report("depth-1 JFB vs finite differences (all losses)", worst, 1e-5);
}

}  // namespace

std::vector<VerificationReport> gradcheck_all(std::uint64_t seed, int corrupt_layer) {
  std::vector<VerificationReport> out;
  out.push_back(check_adjoint_identity(seed));
  out.push_back(check_spectral_vs_svd(seed));
  out.push_back(check_conv_vs_dense(seed));
  out.push_back(check_vjp_params(seed, corrupt_layer));
  out.push_back(check_vjp_input(seed));

  {
    const Geometry g = make_geometry(16, 20);
    MaskDistribution dist;
    dist.kind = MaskKind::kUniformSubset;
    dist.s = 10;
    dist.n_angles_total = 20;
    const WeightDiagonal w = compute_weight_diagonal(dist);
    RngStream rng = RngStream(seed).fork(8);
    Image gt = random_image(16, rng, true);
    NoiseConfig noise;
    noise.relative_level = 0.01;
    noise.seed = seed;
    RngStream pr = rng.fork(2);
    MeasurementPair pair = make_training_pair(gt, g, dist, noise, pr);
    out.push_back(check_loss_cotangent(
        {"self-weighted loss", [&](const Image& xi) { return loss_self(xi, pair, w, g); }},
        seed));
    out.push_back(check_loss_cotangent(
        {"operator-supervised loss",
         [&](const Image& xi) { return loss_sup_operator(xi, gt, g); }},
        seed + 1));
    out.push_back(check_loss_cotangent(
        {"plain supervised loss", [&](const Image& xi) { return loss_sup_plain(xi, gt); }},
        seed + 2));
  }

  out.push_back(check_grad_fidelity(seed));
  out.push_back(check_depth1_jfb(seed));
  return out;
}

}  // namespace tsdq
