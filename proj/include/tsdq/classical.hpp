#pragma once

#include <vector>

#include "tsdq/radon.hpp"
#include "tsdq/sampling.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

enum class FbpFilter { kRamLak, kSheppLogan, kNone };

/// Filtered back-projection: frequency-domain ramp filtering of each angle
/// row followed by the masked adjoint scaled by pi / (2 * |mask|).
Image fbp(const Sinogram& y, const AngleMask& mask, const Geometry& g,
          FbpFilter filter = FbpFilter::kRamLak);

enum class TVStepRule { kFixed, kAdaptive };

struct TVConfig {
  double lambda = 1e-2;   ///< weight of the isotropic TV penalty
  int max_iters = 500;
  double tol = 1e-7;      ///< relative objective-change stopping threshold
  TVStepRule step_rule = TVStepRule::kAdaptive;
  double tau = 0.0;       ///< primal step for the fixed rule

  void validate() const;
};

struct TVResult {
  Image x;
  bool converged = false;
  int n_iters = 0;
  /// Objective value of the best iterate after each outer iteration
  /// (non-increasing by construction).
  std::vector<double> objective_history;
};

/// Approximate minimizer of 0.5 ||y - MAx||^2 + lambda * TV(x) over x >= 0,
/// solved with a primal-dual scheme; isotropic TV with forward differences
/// and Neumann boundary. The reported iterate is the best one visited, so
/// the published objective history is monotone.
TVResult tv_reconstruct(const Sinogram& y, const AngleMask& mask, const Geometry& g,
                        const TVConfig& cfg);

double tv_value(const Image& x);

/// Log-spaced grid search maximizing PSNR against one held-out phantom.
double tune_tv_lambda(const Image& holdout, const Sinogram& y, const AngleMask& mask,
                      const Geometry& g, const TVConfig& base, double lambda_lo,
                      double lambda_hi, int n_grid = 10);

}  // namespace tsdq
