#include "tsdq/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace tsdq {

double psnr(const Image& x, const Image& ref, double data_range) {
  if (x.side != ref.side) throw std::invalid_argument("psnr: shape mismatch");
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = x.data[i] - ref.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(static_cast<std::size_t>(kWindow) * kWindow);
    const int r = kWindow / 2;
    double sum = 0.0;
    for (int y = 0; y < kWindow; ++y) {
      for (int x = 0; x < kWindow; ++x) {
        const double dy = y - r, dx = x - r;
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
        v[static_cast<std::size_t>(y) * kWindow + x] = g;
        sum += g;
      }
    }
    for (auto& e : v) e /= sum;
    return v;
  }();
  return w;
}

}  // namespace

double ssim(const Image& x, const Image& ref, double data_range) {
  if (x.side != ref.side) throw std::invalid_argument("ssim: shape mismatch");
  if (x.side < kWindow) throw std::invalid_argument("ssim: side must be >= 11");
  if (!(data_range > 0.0)) throw std::invalid_argument("ssim: data_range must be positive");
  const std::vector<double>& w = gaussian_window();
  const double c1v = (0.01 * data_range) * (0.01 * data_range);
  const double c2v = (0.03 * data_range) * (0.03 * data_range);
  const int n = x.side;
  const int last = n - kWindow;
  double total = 0.0;
  long count = 0;
  for (int oy = 0; oy <= last; ++oy) {
    for (int ox = 0; ox <= last; ++ox) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int wy = 0; wy < kWindow; ++wy) {
        const double* xr = x.data.data() + static_cast<std::size_t>(oy + wy) * n + ox;
        const double* yr = ref.data.data() + static_cast<std::size_t>(oy + wy) * n + ox;
        const double* wr = w.data() + static_cast<std::size_t>(wy) * kWindow;
        for (int wx = 0; wx < kWindow; ++wx) {
          const double g = wr[wx];
          mx += g * xr[wx];
          my += g * yr[wx];
          sxx += g * xr[wx] * xr[wx];
          syy += g * yr[wx] * yr[wx];
          sxy += g * xr[wx] * yr[wx];
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      const double val = ((2.0 * mx * my + c1v) * (2.0 * cxy + c2v)) /
                         ((mx * mx + my * my + c1v) * (vx + vy + c2v));
      total += val;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace tsdq
