#include "tsdq/classical.hpp"

#include <limits>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "tsdq/metrics.hpp"
#include "tsdq/parallel.hpp"

namespace tsdq {

namespace {

int next_pow2(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

// Frequency response of the reconstruction filter. The ramp |f| carries a
// factor 2 * detector_spacing / pixel_spacing^2 so that the final image is
// adjoint(filtered) * pi / (2 * n_angles).
std::vector<double> filter_response(int n_pad, const Geometry& g, FbpFilter filter) {
  std::vector<double> h(static_cast<std::size_t>(n_pad));
  const double gain = 2.0 / (g.pixel_spacing * g.pixel_spacing);
  for (int k = 0; k < n_pad; ++k) {
    const int folded = std::min(k, n_pad - k);
    double v = gain * static_cast<double>(folded) / n_pad;
    if (filter == FbpFilter::kSheppLogan && folded > 0) {
      const double t = std::numbers::pi * folded / n_pad;
      v *= std::sin(t) / t;
    }
    h[static_cast<std::size_t>(k)] = v;
  }
  return h;
}

}  // namespace

Image fbp(const Sinogram& y, const AngleMask& mask, const Geometry& g, FbpFilter filter) {
  if (y.n_angles != mask.count() || y.n_detectors != g.n_detectors) {
    throw std::invalid_argument("fbp: sinogram dimensions do not match mask/geometry");
  }
  Sinogram filtered = y;
  if (filter != FbpFilter::kNone) {
    const int n_pad = next_pow2(2 * g.n_detectors);
    const std::vector<double> h = filter_response(n_pad, g, filter);
    parallel_for(static_cast<std::size_t>(y.n_angles), [&](std::size_t a) {
      Eigen::FFT<double> fft;
      std::vector<double> row(static_cast<std::size_t>(n_pad), 0.0);
      const double* src = y.data.data() + a * static_cast<std::size_t>(g.n_detectors);
      std::copy(src, src + g.n_detectors, row.begin());
      std::vector<std::complex<double>> freq;
      fft.fwd(freq, row);
      for (int k = 0; k < n_pad; ++k) freq[static_cast<std::size_t>(k)] *= h[static_cast<std::size_t>(k)];
      fft.inv(row, freq);
      double* dst = filtered.data.data() + a * static_cast<std::size_t>(g.n_detectors);
      std::copy(row.begin(), row.begin() + g.n_detectors, dst);
    });
  }
  Image out = radon_adjoint_masked(filtered, mask, g);
  const double scale = std::numbers::pi / (2.0 * mask.count());
  for (auto& v : out.data) v *= scale;
  return out;
}

void TVConfig::validate() const {
  if (lambda < 0.0) throw std::invalid_argument("TVConfig: lambda must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("TVConfig: max_iters >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("TVConfig: tol must be positive");
  if (step_rule == TVStepRule::kFixed && !(tau > 0.0)) {
    throw std::invalid_argument("TVConfig: fixed step rule needs tau > 0");
  }
}

namespace {

// Forward differences with Neumann boundary (last row/column zero).
void grad_image(const Image& x, std::vector<double>& gx, std::vector<double>& gy) {
  const int n = x.side;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * n + c;
      gx[i] = c + 1 < n ? x.data[i + 1] - x.data[i] : 0.0;
      gy[i] = r + 1 < n ? x.data[i + static_cast<std::size_t>(n)] - x.data[i] : 0.0;
    }
  }
}

// Negative divergence, the exact adjoint of grad_image.
void grad_adjoint(const std::vector<double>& qx, const std::vector<double>& qy, Image& out) {
  const int n = out.side;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * n + c;
      double v = 0.0;
      if (c > 0) v += qx[i - 1];
      if (c + 1 < n) v -= qx[i];
      if (r > 0) v += qy[i - static_cast<std::size_t>(n)];
      if (r + 1 < n) v -= qy[i];
      out.data[i] = v;
    }
  }
}

}  // namespace

double tv_value(const Image& x) {
  const std::size_t n = x.data.size();
  std::vector<double> gx(n), gy(n);
  grad_image(x, gx, gy);
  double tv = 0.0;
  for (std::size_t i = 0; i < n; ++i) tv += std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  return tv;
}

TVResult tv_reconstruct(const Sinogram& y, const AngleMask& mask, const Geometry& g,
                        const TVConfig& cfg) {
  cfg.validate();
  if (y.n_angles != mask.count() || y.n_detectors != g.n_detectors) {
    throw std::invalid_argument("tv_reconstruct: sinogram dimensions do not match");
  }
  const std::size_t npix = g.image_size();

  const SpectralNormResult sn =
      spectral_norm(masked_radon_operator(mask, g), 1e-6, 500, 0x7455ULL);
  const double l_sq = sn.value * sn.value + 8.0;  // ||(MA; D)||^2 bound
  double tau, sigma;
  if (cfg.step_rule == TVStepRule::kFixed) {
    tau = cfg.tau;
    sigma = 1.0 / (tau * l_sq);
  } else {
    tau = sigma = 1.0 / std::sqrt(l_sq);
  }

  Image x(g.n_pixels, 0.0);
  Image x_bar = x;
  std::vector<double> dual_y(y.data.size(), 0.0);
  std::vector<double> qx(npix, 0.0), qy(npix, 0.0);
  std::vector<double> gx(npix), gy(npix);
  Image div(g.n_pixels, 0.0);

  TVResult res;
  res.x = x;
  double best_obj = std::numeric_limits<double>::infinity();
  double prev_obj = std::numeric_limits<double>::infinity();
  int stable = 0;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    // Dual ascent on the data term: prox of the conjugate of 0.5||.-y||^2.
    Sinogram proj = radon_forward_masked(x_bar, mask, g);
    for (std::size_t i = 0; i < dual_y.size(); ++i) {
      dual_y[i] = (dual_y[i] + sigma * (proj.data[i] - y.data[i])) / (1.0 + sigma);
    }
    // Dual ascent on the TV term: pixelwise clamp to the lambda ball.
    grad_image(x_bar, gx, gy);
    for (std::size_t i = 0; i < npix; ++i) {
      const double ax = qx[i] + sigma * gx[i];
      const double ay = qy[i] + sigma * gy[i];
      const double mag = std::sqrt(ax * ax + ay * ay);
      const double f = mag > cfg.lambda ? cfg.lambda / mag : 1.0;
      qx[i] = ax * f;
      qy[i] = ay * f;
    }
    // Primal descent with nonnegativity projection.
    Sinogram dual_sino;
    dual_sino.n_angles = y.n_angles;
    dual_sino.n_detectors = y.n_detectors;
    dual_sino.data = dual_y;
    Image back = radon_adjoint_masked(dual_sino, mask, g);
    grad_adjoint(qx, qy, div);
    Image x_new(g.n_pixels);
    for (std::size_t i = 0; i < npix; ++i) {
      const double v = x.data[i] - tau * (back.data[i] + div.data[i]);
      x_new.data[i] = v > 0.0 ? v : 0.0;
    }
    for (std::size_t i = 0; i < npix; ++i) x_bar.data[i] = 2.0 * x_new.data[i] - x.data[i];
    x = std::move(x_new);
    res.n_iters = it;

    Sinogram fit = radon_forward_masked(x, mask, g);
    double obj = 0.0;
    for (std::size_t i = 0; i < fit.data.size(); ++i) {
      const double d = fit.data[i] - y.data[i];
      obj += 0.5 * d * d;
    }
    obj += cfg.lambda * tv_value(x);
    if (obj < best_obj) {
      best_obj = obj;
      res.x = x;
    }
    res.objective_history.push_back(best_obj);
    if (std::abs(obj - prev_obj) <= cfg.tol * std::max(std::abs(obj), 1e-300)) {
      if (++stable >= 5) {
        res.converged = true;
        break;
      }
    } else {
      stable = 0;
    }
    prev_obj = obj;
  }
  return res;
}

double tune_tv_lambda(const Image& holdout, const Sinogram& y, const AngleMask& mask,
                      const Geometry& g, const TVConfig& base, double lambda_lo,
                      double lambda_hi, int n_grid) {
  if (!(lambda_lo > 0.0) || !(lambda_hi > lambda_lo) || n_grid < 2) {
    throw std::invalid_argument("tune_tv_lambda: bad grid");
  }
  double range = 0.0;
  for (double v : holdout.data) range = std::max(range, v);
  if (range == 0.0) range = 1.0;
  double best_lambda = lambda_lo;
  double best_psnr = -std::numeric_limits<double>::infinity();
  const double log_lo = std::log(lambda_lo);
  const double log_hi = std::log(lambda_hi);
  for (int i = 0; i < n_grid; ++i) {
    TVConfig cfg = base;
    cfg.lambda = std::exp(log_lo + (log_hi - log_lo) * i / (n_grid - 1));
    const TVResult r = tv_reconstruct(y, mask, g, cfg);
    const double p = psnr(r.x, holdout, range);
    if (p > best_psnr) {
      best_psnr = p;
      best_lambda = cfg.lambda;
    }
  }
  return best_lambda;
}

}  // namespace tsdq
