#include "tsdq/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "tsdq/rng.hpp"

namespace tsdq {

namespace {

struct Ellipse {
  double cx, cy;    // center in [-1, 1] coordinates
  double a, b;      // semi-axes
  double phi;       // rotation, radians
  double value;     // additive intensity
};

bool inside(const Ellipse& e, double x, double y) {
  const double dx = x - e.cx;
  const double dy = y - e.cy;
  const double c = std::cos(e.phi);
  const double s = std::sin(e.phi);
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return u * u + v * v <= 1.0;
}

// Head phantom on the classic ellipse geometry; intensities chosen so the
// whole interior stays strictly positive before clipping.
const std::vector<Ellipse>& shepp_logan_ellipses() {
  static const std::vector<Ellipse> es = {
      {0.0, 0.0, 0.69, 0.92, 0.0, 1.0},
      {0.0, -0.0184, 0.6624, 0.874, 0.0, -0.70},
      {0.22, 0.0, 0.11, 0.31, -18.0 * std::numbers::pi / 180.0, -0.25},
      {-0.22, 0.0, 0.16, 0.41, 18.0 * std::numbers::pi / 180.0, -0.25},
      {0.0, 0.35, 0.21, 0.25, 0.0, 0.30},
      {0.0, 0.1, 0.046, 0.046, 0.0, 0.30},
      {0.0, -0.1, 0.046, 0.046, 0.0, 0.30},
      {-0.08, -0.605, 0.046, 0.023, 0.0, 0.30},
      {0.0, -0.605, 0.023, 0.023, 0.0, 0.30},
      {0.06, -0.605, 0.023, 0.046, 0.0, 0.30},
  };
  return es;
}

Image rasterize(const std::vector<Ellipse>& ellipses, int side) {
  Image img(side, 0.0);
  const double half = 0.5 * side;
  for (int r = 0; r < side; ++r) {
    // Pixel centers mapped to [-1, 1]; row 0 is the top of the image.
    const double y = (half - 0.5 - r) / half;
    for (int c = 0; c < side; ++c) {
      const double x = (c + 0.5 - half) / half;
      double v = 0.0;
      for (const Ellipse& e : ellipses) {
        if (inside(e, x, y)) v += e.value;
      }
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace

void PhantomSpec::validate() const {
  if (side < 8) throw std::invalid_argument("PhantomSpec: side must be >= 8");
  if (kind == PhantomKind::kRandomEllipses && (n_min < 1 || n_max < n_min)) {
    throw std::invalid_argument("PhantomSpec: need 1 <= n_min <= n_max");
  }
}

Image generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  if (spec.kind == PhantomKind::kSheppLogan) {
    return rasterize(shepp_logan_ellipses(), spec.side);
  }
  RngStream rng(spec.seed);
  const int n = spec.n_min + static_cast<int>(rng.next_below(
                                 static_cast<std::uint64_t>(spec.n_max - spec.n_min + 1)));
  std::vector<Ellipse> es;
  es.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Ellipse e;
    e.cx = -0.6 + 1.2 * rng.next_double();
    e.cy = -0.6 + 1.2 * rng.next_double();
    e.a = 0.1 + 0.35 * rng.next_double();
    e.b = 0.1 + 0.35 * rng.next_double();
    e.phi = std::numbers::pi * rng.next_double();
    // The first ellipse is always additive so the phantom has support.
    e.value = i == 0 ? 0.25 + 0.65 * rng.next_double() : -0.3 + 1.1 * rng.next_double();
    es.push_back(e);
  }
  return rasterize(es, spec.side);
}

}  // namespace tsdq
