#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsdq {

/// Parallel-beam acquisition geometry. Angles are the equispaced grid
/// theta_j = j*pi/n_angles_total over the half-open range [0, pi); the
/// detector array is centered on the rotation axis.
struct Geometry {
  int n_pixels = 0;        ///< image is n_pixels x n_pixels
  int n_angles_total = 0;  ///< size of the full angular grid
  int n_detectors = 0;     ///< detector bins per angle
  double pixel_spacing = 1.0;
  double detector_spacing = 1.0;

  double angle(int j) const;
  /// Detector offset of bin d, measured from the rotation axis.
  double detector_offset(int d) const;
  std::size_t image_size() const { return static_cast<std::size_t>(n_pixels) * n_pixels; }
  std::size_t sinogram_size() const {
    return static_cast<std::size_t>(n_angles_total) * n_detectors;
  }
  void validate() const;
};

/// Detector count covering the image diagonal, rounded up to odd so one
/// bin is centered on the rotation axis.
int default_detector_count(int n_pixels);

Geometry make_geometry(int n_pixels, int n_angles_total, int n_detectors = 0,
                       double pixel_spacing = 1.0, double detector_spacing = 1.0);

/// Square pixel grid of attenuation coefficients, row-major.
struct Image {
  std::vector<double> data;
  int side = 0;

  Image() = default;
  Image(int side_, double fill = 0.0)
      : data(static_cast<std::size_t>(side_) * side_, fill), side(side_) {}

  double& at(int row, int col) { return data[static_cast<std::size_t>(row) * side + col]; }
  double at(int row, int col) const { return data[static_cast<std::size_t>(row) * side + col]; }
  std::size_t size() const { return data.size(); }
};

/// Line-integral data, row-major by angle then detector bin.
struct Sinogram {
  std::vector<double> data;
  int n_angles = 0;
  int n_detectors = 0;

  Sinogram() = default;
  Sinogram(int n_angles_, int n_detectors_, double fill = 0.0)
      : data(static_cast<std::size_t>(n_angles_) * n_detectors_, fill),
        n_angles(n_angles_),
        n_detectors(n_detectors_) {}

  double& at(int a, int d) { return data[static_cast<std::size_t>(a) * n_detectors + d]; }
  double at(int a, int d) const { return data[static_cast<std::size_t>(a) * n_detectors + d]; }
  std::size_t size() const { return data.size(); }
};

/// Raised when an algorithm hits non-finite values or an unrecoverable
/// numerical state; the CLI maps it to its own exit code.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Small vector helpers shared across modules.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& v);
void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y);

}  // namespace tsdq
