#include "tsdq/radon.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tsdq/parallel.hpp"

namespace tsdq {

namespace {

// Sampling grid along a ray. The stride is half a pixel: with unit-pitch
// bilinear reads the per-angle mass error of a full-pitch stride exceeds
// one percent near diagonal angles, half-pitch keeps it well below.
struct RayGrid {
  double step;
  int n_samples;
  double tau0;     // first sample offset (grid symmetric about 0)
  double bound;    // half-width of the box containing all nonzero reads
};

RayGrid make_ray_grid(const Geometry& g) {
  RayGrid r;
  r.step = 0.25 * g.pixel_spacing;
  const double radius = 0.5 * std::sqrt(2.0) * g.n_pixels * g.pixel_spacing + g.pixel_spacing;
  const int half = static_cast<int>(std::ceil(radius / r.step));
  r.n_samples = 2 * half + 1;
  r.tau0 = -half * r.step;
  r.bound = (0.5 * (g.n_pixels - 1) + 1.0) * g.pixel_spacing;
  return r;
}

// Clips the sample index range of one ray against the bounding box; returns
// false when the ray misses it entirely.
bool clip_ray(const RayGrid& grid, double ox, double oy, double dx, double dy, int* k_lo,
              int* k_hi) {
  double t_lo = grid.tau0;
  double t_hi = grid.tau0 + (grid.n_samples - 1) * grid.step;
  const double b = grid.bound;
  const auto clip_axis = [&](double o, double d) {
    if (std::abs(d) < 1e-300) return std::abs(o) <= b;
    double a = (-b - o) / d;
    double c = (b - o) / d;
    if (a > c) std::swap(a, c);
    t_lo = std::max(t_lo, a);
    t_hi = std::min(t_hi, c);
    return true;
  };
  if (!clip_axis(ox, dx) || !clip_axis(oy, dy)) return false;
  if (t_lo > t_hi) return false;
  *k_lo = std::max(0, static_cast<int>(std::ceil((t_lo - grid.tau0) / grid.step - 1e-12)));
  *k_hi = std::min(grid.n_samples - 1,
                   static_cast<int>(std::floor((t_hi - grid.tau0) / grid.step + 1e-12)));
  return *k_lo <= *k_hi;
}

// Walks every bilinear deposit of one (angle, detector) ray. emit_fast
// receives the top-left flat pixel index of a fully interior 2x2 deposit;
// emit_edge handles boundary samples corner by corner. Forward and adjoint
// share this exact code so the pair is an algebraic transpose.
template <typename EmitFast, typename EmitEdge>
inline void trace_ray(const Geometry& g, const RayGrid& grid, double cos_t, double sin_t,
                      double t_off, EmitFast&& emit_fast, EmitEdge&& emit_edge) {
  const int n = g.n_pixels;
  const double inv_dp = 1.0 / g.pixel_spacing;
  const double center = 0.5 * (n - 1);
  const double ox = t_off * cos_t;
  const double oy = t_off * sin_t;
  const double dx = -sin_t;
  const double dy = cos_t;
  int k_lo = 0, k_hi = -1;
  if (!clip_ray(grid, ox, oy, dx, dy, &k_lo, &k_hi)) return;
  for (int k = k_lo; k <= k_hi; ++k) {
    // gx/gy recomputed from k (not incrementally) so weights are identical
    // no matter how the sample range was clipped.
    const double tau = grid.tau0 + k * grid.step;
    const double gx = (ox + tau * dx) * inv_dp + center;
    const double gy = (oy + tau * dy) * inv_dp + center;
    const int c0 = static_cast<int>(std::floor(gx));
    const int r0 = static_cast<int>(std::floor(gy));
    const double fx = gx - c0;
    const double fy = gy - r0;
    const double w00 = grid.step * (1.0 - fx) * (1.0 - fy);
    const double w01 = grid.step * fx * (1.0 - fy);
    const double w10 = grid.step * (1.0 - fx) * fy;
    const double w11 = grid.step * fx * fy;
    if (static_cast<unsigned>(c0) < static_cast<unsigned>(n - 1) &&
        static_cast<unsigned>(r0) < static_cast<unsigned>(n - 1)) {
      emit_fast(static_cast<std::size_t>(r0) * n + c0, w00, w01, w10, w11);
      continue;
    }
    const bool c0_in = c0 >= 0 && c0 < n;
    const bool c1_in = c0 + 1 >= 0 && c0 + 1 < n;
    const bool r0_in = r0 >= 0 && r0 < n;
    const bool r1_in = r0 + 1 >= 0 && r0 + 1 < n;
    if (r0_in) {
      if (c0_in) emit_edge(static_cast<std::size_t>(r0) * n + c0, w00);
      if (c1_in) emit_edge(static_cast<std::size_t>(r0) * n + c0 + 1, w01);
    }
    if (r1_in) {
      if (c0_in) emit_edge(static_cast<std::size_t>(r0 + 1) * n + c0, w10);
      if (c1_in) emit_edge(static_cast<std::size_t>(r0 + 1) * n + c0 + 1, w11);
    }
  }
}

void check_image(const Image& x, const Geometry& g) {
  if (x.side != g.n_pixels || x.data.size() != g.image_size()) {
    throw std::invalid_argument("radon: image dimensions do not match geometry");
  }
}

void forward_angle(const Image& x, const Geometry& g, const RayGrid& grid, int angle,
                   double* out_row) {
  const double theta = g.angle(angle);
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const int n = g.n_pixels;
  const double* img = x.data.data();
  for (int d = 0; d < g.n_detectors; ++d) {
    double acc = 0.0;
    trace_ray(
        g, grid, cos_t, sin_t, g.detector_offset(d),
        [&](std::size_t idx, double w00, double w01, double w10, double w11) {
          acc += w00 * img[idx] + w01 * img[idx + 1] + w10 * img[idx + n] +
                 w11 * img[idx + n + 1];
        },
        [&](std::size_t idx, double w) { acc += w * img[idx]; });
    out_row[d] = acc;
  }
}

void adjoint_angle(const double* y_row, const Geometry& g, const RayGrid& grid, int angle,
                   double* buf) {
  const double theta = g.angle(angle);
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const int n = g.n_pixels;
  for (int d = 0; d < g.n_detectors; ++d) {
    const double v = y_row[d];
    if (v == 0.0) continue;
    trace_ray(
        g, grid, cos_t, sin_t, g.detector_offset(d),
        [&](std::size_t idx, double w00, double w01, double w10, double w11) {
          buf[idx] += w00 * v;
          buf[idx + 1] += w01 * v;
          buf[idx + n] += w10 * v;
          buf[idx + n + 1] += w11 * v;
        },
        [&](std::size_t idx, double w) { buf[idx] += w * v; });
  }
}

}  // namespace

Sinogram radon_forward(const Image& x, const Geometry& g) {
  return radon_forward_masked(x, full_mask(g.n_angles_total), g);
}

Image radon_adjoint(const Sinogram& y, const Geometry& g) {
  return radon_adjoint_masked(y, full_mask(g.n_angles_total), g);
}

Sinogram radon_forward_masked(const Image& x, const AngleMask& mask, const Geometry& g) {
  g.validate();
  mask.validate();
  check_image(x, g);
  if (mask.n_angles_total != g.n_angles_total) {
    throw std::invalid_argument("radon: mask grid does not match geometry");
  }
  const RayGrid grid = make_ray_grid(g);
  Sinogram out(mask.count(), g.n_detectors);
  parallel_for(mask.indices.size(), [&](std::size_t j) {
    forward_angle(x, g, grid, mask.indices[j],
                  out.data.data() + j * static_cast<std::size_t>(g.n_detectors));
  });
  return out;
}

Image radon_adjoint_masked(const Sinogram& y, const AngleMask& mask, const Geometry& g) {
  g.validate();
  mask.validate();
  if (y.n_angles != mask.count() || y.n_detectors != g.n_detectors ||
      mask.n_angles_total != g.n_angles_total) {
    throw std::invalid_argument("radon: sinogram dimensions do not match mask/geometry");
  }
  const RayGrid grid = make_ray_grid(g);
  const std::size_t npix = g.image_size();
  // One buffer per angle, merged in angle order: the accumulation order per
  // pixel never depends on the worker count.
  std::vector<double> partial(mask.indices.size() * npix, 0.0);
  parallel_for(mask.indices.size(), [&](std::size_t j) {
    adjoint_angle(y.data.data() + j * static_cast<std::size_t>(g.n_detectors), g, grid,
                  mask.indices[j], partial.data() + j * npix);
  });
  Image out(g.n_pixels, 0.0);
  for (std::size_t j = 0; j < mask.indices.size(); ++j) {
    const double* buf = partial.data() + j * npix;
    for (std::size_t i = 0; i < npix; ++i) out.data[i] += buf[i];
  }
  return out;
}

Sinogram apply_mask(const Sinogram& full, const AngleMask& mask) {
  if (full.n_angles != mask.n_angles_total) {
    throw std::invalid_argument("apply_mask: sinogram does not cover the full angle grid");
  }
  Sinogram out(mask.count(), full.n_detectors);
  for (int j = 0; j < mask.count(); ++j) {
    const double* src = full.data.data() +
                        static_cast<std::size_t>(mask.indices[j]) * full.n_detectors;
    std::copy(src, src + full.n_detectors,
              out.data.data() + static_cast<std::size_t>(j) * full.n_detectors);
  }
  return out;
}

Image grad_data_fidelity(const Image& x, const Sinogram& y, const AngleMask& mask,
                         const Geometry& g) {
  if (y.n_angles != mask.count()) {
    throw std::invalid_argument("grad_data_fidelity: measurement/mask angle count mismatch");
  }
  Sinogram residual = radon_forward_masked(x, mask, g);
  for (std::size_t i = 0; i < residual.data.size(); ++i) residual.data[i] -= y.data[i];
  return radon_adjoint_masked(residual, mask, g);
}

LinearOperator masked_radon_operator(const AngleMask& mask, const Geometry& g) {
  LinearOperator op;
  op.domain_size = g.image_size();
  op.range_size = static_cast<std::size_t>(mask.count()) * g.n_detectors;
  op.forward = [mask, g](const std::vector<double>& v) {
    Image x;
    x.side = g.n_pixels;
    x.data = v;
    return radon_forward_masked(x, mask, g).data;
  };
  op.adjoint = [mask, g](const std::vector<double>& v) {
    Sinogram y;
    y.n_angles = mask.count();
    y.n_detectors = g.n_detectors;
    y.data = v;
    return radon_adjoint_masked(y, mask, g).data;
  };
  return op;
}

SpectralNormResult spectral_norm(const LinearOperator& op, double tol, int max_iter,
                                 std::uint64_t seed) {
  if (op.domain_size == 0 || !op.forward || !op.adjoint) {
    throw std::invalid_argument("spectral_norm: operator handle is incomplete");
  }
  RngStream rng(seed);
  std::vector<double> v(op.domain_size);
  for (auto& e : v) e = rng.next_gaussian();
  double nv = norm2(v);
  if (nv == 0.0) v[0] = nv = 1.0;
  for (auto& e : v) e /= nv;

  SpectralNormResult res;
  double prev = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    std::vector<double> w = op.forward(v);
    const double sigma = norm2(w);
    res.value = sigma;
    res.n_iters = it;
    if (sigma == 0.0) {
      res.converged = true;
      return res;
    }
    if (it > 1 && std::abs(sigma - prev) < tol * sigma) {
      res.converged = true;
      return res;
    }
    prev = sigma;
    v = op.adjoint(w);
    const double n = norm2(v);
    if (n == 0.0) {
      res.converged = true;
      return res;
    }
    for (auto& e : v) e /= n;
  }
  res.converged = false;
  return res;
}

}  // namespace tsdq
