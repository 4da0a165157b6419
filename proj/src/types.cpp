#include "tsdq/types.hpp"

#include <cmath>
#include <numbers>

namespace tsdq {

double Geometry::angle(int j) const {
  return static_cast<double>(j) * std::numbers::pi / n_angles_total;
}

double Geometry::detector_offset(int d) const {
  return (d - 0.5 * (n_detectors - 1)) * detector_spacing;
}

void Geometry::validate() const {
  if (n_pixels < 1 || n_angles_total < 1 || n_detectors < 1) {
    throw std::invalid_argument("Geometry: all counts must be >= 1");
  }
  if (!(pixel_spacing > 0.0) || !(detector_spacing > 0.0)) {
    throw std::invalid_argument("Geometry: spacings must be positive");
  }
}

int default_detector_count(int n_pixels) {
  int d = static_cast<int>(std::ceil(std::sqrt(2.0) * n_pixels));
  if (d % 2 == 0) ++d;
  return d;
}

Geometry make_geometry(int n_pixels, int n_angles_total, int n_detectors, double pixel_spacing,
                       double detector_spacing) {
  Geometry g;
  g.n_pixels = n_pixels;
  g.n_angles_total = n_angles_total;
  g.n_detectors = n_detectors > 0 ? n_detectors : default_detector_count(n_pixels);
  g.pixel_spacing = pixel_spacing;
  g.detector_spacing = detector_spacing;
  g.validate();
  return g;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace tsdq
