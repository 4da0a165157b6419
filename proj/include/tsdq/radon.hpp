#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tsdq/sampling.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

/// Discrete parallel-beam Radon transform over the full angular grid.
///
/// Ray-driven discretization: each (angle, detector) ray is sampled at a
/// fixed stride along its direction and the image is read by bilinear
/// interpolation at every sample; a sample contributes (stride x bilinear
/// weight) so the row approximates a line integral. The adjoint deposits
/// the transposed weights, making the pair algebraically exact.
Sinogram radon_forward(const Image& x, const Geometry& g);

/// Exact algebraic adjoint of radon_forward (same weights, transposed).
/// Deposits are accumulated into per-angle buffers merged in angle order,
/// so the result is bit-identical for every worker count.
Image radon_adjoint(const Sinogram& y, const Geometry& g);

/// Masked variants: rows restricted to the angles listed in the mask.
Sinogram radon_forward_masked(const Image& x, const AngleMask& mask, const Geometry& g);
Image radon_adjoint_masked(const Sinogram& y, const AngleMask& mask, const Geometry& g);

/// Restriction of a full sinogram to the masked rows.
Sinogram apply_mask(const Sinogram& full, const AngleMask& mask);

/// Gradient of the least-squares data fidelity: (MA)^T (MA x - y).
Image grad_data_fidelity(const Image& x, const Sinogram& y, const AngleMask& mask,
                         const Geometry& g);

/// Matrix-free linear operator handle for norm estimation.
struct LinearOperator {
  std::size_t domain_size = 0;
  std::size_t range_size = 0;
  std::function<std::vector<double>(const std::vector<double>&)> forward;
  std::function<std::vector<double>(const std::vector<double>&)> adjoint;
};

LinearOperator masked_radon_operator(const AngleMask& mask, const Geometry& g);

struct SpectralNormResult {
  double value = 0.0;
  bool converged = false;
  int n_iters = 0;
};

/// Power-iteration estimate of the largest singular value. Converged when
/// successive estimates differ relatively by less than tol; on hitting
/// max_iter the best estimate is returned with converged = false.
SpectralNormResult spectral_norm(const LinearOperator& op, double tol, int max_iter,
                                 std::uint64_t seed);

}  // namespace tsdq
