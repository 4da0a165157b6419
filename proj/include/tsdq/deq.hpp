#pragma once

#include <string>
#include <vector>

#include "tsdq/denoiser.hpp"
#include "tsdq/radon.hpp"
#include "tsdq/sampling.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

enum class GammaMode {
  kFixed,             ///< use DEQConfig::gamma as-is
  kAutoInverseNorm,   ///< gamma = 1 / ||M_s A||
  kAutoInverseNormSq  ///< gamma = gamma_scale / ||M_s A||^2 (safe step bound)
};

enum class InitPolicy { kZero, kFbp };

struct AndersonConfig {
  bool enabled = false;
  int depth = 5;
  double ridge = 1e-8;
  double damping = 1.0;
};

struct DEQConfig {
  double alpha = 0.5;
  GammaMode gamma_mode = GammaMode::kAutoInverseNorm;
  double gamma = 0.0;        ///< resolved step size (gamma_mode == kFixed)
  double gamma_scale = 1.0;  ///< c in c / ||M_s A||^2, c <= 2
  int s_ref = 0;             ///< equispaced angle count defining M_s for auto modes
  double fp_tol = 1e-3;
  int fp_max_iter = 100;
  AndersonConfig anderson;
  InitPolicy init = InitPolicy::kZero;

  void validate() const;
};

/// Resolves the auto gamma modes against a geometry: the spectral norm of
/// the equispaced-mask operator M_s A is estimated once and inverted per
/// the selected mode. Returns a config with gamma_mode == kFixed.
DEQConfig resolve_gamma(const DEQConfig& cfg, const Geometry& g);

/// One application of the learned reconstruction operator:
///   T(x) = clamp_+( alpha * f(s) + (1 - alpha) * s ),  s = x - gamma * grad_fid(x).
Image apply_t_theta(const Image& x, const Sinogram& y, const AngleMask& mask,
                    const DenoiserParams& p, const DEQConfig& cfg, const Geometry& g);

struct FixedPointResult {
  Image x_bar;
  int n_iters = 0;
  double final_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;  ///< relative step size per iteration
  bool used_anderson = false;            ///< accelerated candidate was returned
};

/// Fixed-point iteration of apply_t_theta with relative-difference stopping.
/// In Anderson mode the accelerated candidate is kept only if its
/// plain-iteration residual ||T(x)-x||/||x|| is no worse than the
/// unaccelerated run's final residual; otherwise the plain run is returned.
FixedPointResult fixed_point_solve(const Sinogram& y, const AngleMask& mask,
                                   const DenoiserParams& p, const DEQConfig& cfg,
                                   const Geometry& g);

/// residual_history as CSV with header "iteration,residual".
void write_residual_csv(const FixedPointResult& r, const std::string& path);

}  // namespace tsdq
