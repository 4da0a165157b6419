#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "tsdq/radon.hpp"
#include "tsdq/rng.hpp"

using namespace tsdq;

namespace {

// Independent oracle: brute-force line integral of the bilinearly
// interpolated image, stepping each ray at pixel_spacing / 16.
double oracle_ray(const Image& x, const Geometry& g, int angle, int det) {
  const int n = g.n_pixels;
  const double dp = g.pixel_spacing;
  const double c0 = 0.5 * (n - 1);
  const double theta = g.angle(angle);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double t = g.detector_offset(det);
  const double step = dp / 16.0;
  const double radius = 0.5 * std::sqrt(2.0) * n * dp + dp;
  const int half = static_cast<int>(std::ceil(radius / step));
  const auto pix = [&](int r, int c) -> double {
    return (r >= 0 && r < n && c >= 0 && c < n) ? x.at(r, c) : 0.0;
  };
  double acc = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double tau = k * step;
    const double gx = (t * ct - tau * st) / dp + c0;
    const double gy = (t * st + tau * ct) / dp + c0;
    const int cc = static_cast<int>(std::floor(gx));
    const int rr = static_cast<int>(std::floor(gy));
    const double fx = gx - cc, fy = gy - rr;
    acc += (1 - fx) * (1 - fy) * pix(rr, cc) + fx * (1 - fy) * pix(rr, cc + 1) +
           (1 - fx) * fy * pix(rr + 1, cc) + fx * fy * pix(rr + 1, cc + 1);
  }
  return acc * step;
}

Eigen::MatrixXd dense_from_forward(const AngleMask& mask, const Geometry& g) {
  const int m = mask.count() * g.n_detectors;
  const int n = static_cast<int>(g.image_size());
  Eigen::MatrixXd A(m, n);
  for (int col = 0; col < n; ++col) {
    Image basis(g.n_pixels, 0.0);
    basis.data[static_cast<std::size_t>(col)] = 1.0;
    Sinogram s = radon_forward_masked(basis, mask, g);
    for (int r = 0; r < m; ++r) A(r, col) = s.data[static_cast<std::size_t>(r)];
  }
  return A;
}

Image rotate90(const Image& x) {
  Image out(x.side);
  for (int r = 0; r < x.side; ++r) {
    for (int c = 0; c < x.side; ++c) out.at(c, x.side - 1 - r) = x.at(r, c);
  }
  return out;
}

}  // namespace

TEST_CASE("radon_forward is linear and maps zero to zero") {
  const Geometry g = make_geometry(32, 8, 47);
  Image zero(32, 0.0);
  Sinogram s0 = radon_forward(zero, g);
  for (double v : s0.data) CHECK(v == 0.0);

  RngStream rng(11);
  Image x(32);
  for (auto& v : x.data) v = rng.next_double();
  Image x2 = x;
  for (auto& v : x2.data) v *= 2.0;
  Sinogram sx = radon_forward(x, g);
  Sinogram sx2 = radon_forward(x2, g);
  for (std::size_t i = 0; i < sx.data.size(); ++i) {
    CHECK(sx2.data[i] == doctest::Approx(2.0 * sx.data[i]).epsilon(1e-14));
  }

  Image y(32);
  for (auto& v : y.data) v = rng.next_gaussian();
  Image xy = x;
  axpy(1.0, y.data, xy.data);
  Sinogram sy = radon_forward(y, g);
  Sinogram sxy = radon_forward(xy, g);
  for (std::size_t i = 0; i < sxy.data.size(); ++i) {
    CHECK(sxy.data[i] ==
          doctest::Approx(sx.data[i] + sy.data[i]).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("central impulse projections match the fine-step oracle per angle") {
  const Geometry g = make_geometry(32, 8, 47);
  Image x(32, 0.0);
  x.at(16, 16) = 1.0;
  Sinogram s = radon_forward(x, g);
  for (int a = 0; a < 8; ++a) {
    double fwd_sum = 0.0, oracle_sum = 0.0;
    for (int d = 0; d < g.n_detectors; ++d) {
      fwd_sum += s.at(a, d);
      oracle_sum += oracle_ray(x, g, a, d);
    }
    // Expected per-angle sums are the oracle's; both sit near the impulse
    // mass times the pixel spacing.
    CHECK(std::abs(fwd_sum - oracle_sum) < 0.01 * g.pixel_spacing);
    CHECK(std::abs(oracle_sum - 1.0 * g.pixel_spacing) < 0.04 * g.pixel_spacing);
  }
}

TEST_CASE("mass consistency for images supported inside the inscribed circle") {
  const Geometry g = make_geometry(32, 8, 47);
  // Smooth blob well inside the inscribed circle.
  Image x(32, 0.0);
  double mass = 0.0;
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const double dx = (c - 15.5) / 16.0, dy = (r - 15.5) / 16.0;
      const double rad = std::sqrt(dx * dx + dy * dy);
      if (rad < 0.8) {
        x.at(r, c) = std::cos(rad / 0.8 * 1.5707963267948966);
        mass += x.at(r, c);
      }
    }
  }
  Sinogram s = radon_forward(x, g);
  for (int a = 0; a < 8; ++a) {
    double sum = 0.0;
    for (int d = 0; d < g.n_detectors; ++d) sum += s.at(a, d);
    CHECK(sum == doctest::Approx(mass * g.pixel_spacing).epsilon(0.01));
  }
}

TEST_CASE("adjoint is the exact transpose of the forward") {
  const Geometry g = make_geometry(16, 12);
  const AngleMask mask = full_mask(12);
  const Eigen::MatrixXd A = dense_from_forward(mask, g);

  RngStream rng(229);
  for (int trial = 0; trial < 20; ++trial) {
    Image x(16);
    for (auto& v : x.data) v = rng.next_gaussian();
    Sinogram y(12, g.n_detectors);
    for (auto& v : y.data) v = rng.next_gaussian();
    Sinogram ax = radon_forward_masked(x, mask, g);
    Image aty = radon_adjoint_masked(y, mask, g);
    const double lhs = dot(ax.data, y.data);
    const double rhs = dot(x.data, aty.data);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * norm2(ax.data) * norm2(y.data));
    // Same check against the explicitly materialized matrix.
    Eigen::Map<const Eigen::VectorXd> yv(y.data.data(), static_cast<Eigen::Index>(y.data.size()));
    Eigen::VectorXd dense_aty = A.transpose() * yv;
    for (std::size_t i = 0; i < aty.data.size(); ++i) {
      CHECK(aty.data[i] == doctest::Approx(dense_aty(static_cast<Eigen::Index>(i)))
                               .epsilon(1e-12)
                               .scale(dense_aty.cwiseAbs().maxCoeff()));
    }
  }

  Sinogram zero(12, g.n_detectors);
  Image z = radon_adjoint_masked(zero, mask, g);
  for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("normal operator commutes with quarter-turn rotations of the grid") {
  // 12 equispaced angles over [0, pi) are closed under a 90-degree shift,
  // so A^T A must commute with the grid rotation.
  const Geometry g = make_geometry(16, 12);
  Image x(16, 0.0);
  x.at(8, 8) = 1.0;
  x.at(5, 9) = 0.7;
  const auto normal_op = [&](const Image& img) {
    return radon_adjoint(radon_forward(img, g), g);
  };
  Image lhs = normal_op(rotate90(x));
  Image rhs = rotate90(normal_op(x));
  double scale = 0.0;
  for (double v : rhs.data) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < lhs.data.size(); ++i) {
    CHECK(lhs.data[i] == doctest::Approx(rhs.data[i]).epsilon(1e-10).scale(scale));
  }
}

TEST_CASE("spectral_norm on analytic operators") {
  LinearOperator scale2;
  scale2.domain_size = scale2.range_size = 5;
  scale2.forward = [](const std::vector<double>& v) {
    std::vector<double> out = v;
    for (auto& e : out) e *= 2.0;
    return out;
  };
  scale2.adjoint = scale2.forward;
  CHECK(spectral_norm(scale2, 1e-10, 100, 1).value == doctest::Approx(2.0).epsilon(1e-9));

  // Dense 2x2 map with singular values {3, 4}.
  const std::vector<std::vector<double>> m = {{4.0, 0.0}, {0.0, 3.0}};
  LinearOperator diag;
  diag.domain_size = diag.range_size = 2;
  diag.forward = [m](const std::vector<double>& v) {
    return std::vector<double>{m[0][0] * v[0] + m[0][1] * v[1],
                               m[1][0] * v[0] + m[1][1] * v[1]};
  };
  diag.adjoint = diag.forward;
  const SpectralNormResult r = spectral_norm(diag, 1e-12, 2000, 7);
  CHECK(std::abs(r.value - 4.0) < 1e-6);

  // Non-convergence surface: one iteration cannot converge.
  const SpectralNormResult capped = spectral_norm(diag, 1e-12, 1, 7);
  CHECK_FALSE(capped.converged);
  CHECK(capped.value > 0.0);
}

TEST_CASE("spectral_norm of the masked operator matches a dense SVD") {
  const Geometry g = make_geometry(32, 60);
  const AngleMask mask = equispaced_mask(12, 60);
  const SpectralNormResult est = spectral_norm(masked_radon_operator(mask, g), 1e-9, 5000, 3);
  CHECK(est.converged);
  const Eigen::MatrixXd A = dense_from_forward(mask, g);
  const double exact = Eigen::BDCSVD<Eigen::MatrixXd>(A).singularValues()(0);
  CHECK(std::abs(est.value - exact) / exact < 1e-4);
}

TEST_CASE("spectral norm is monotone under angle-subset inclusion") {
  const Geometry g = make_geometry(12, 16);
  const Eigen::MatrixXd A_full = dense_from_forward(full_mask(16), g);
  const double full_norm = Eigen::BDCSVD<Eigen::MatrixXd>(A_full).singularValues()(0);
  RngStream rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    MaskDistribution dist{MaskKind::kUniformSubset, 2 + trial * 3, 16};
    RngStream draw = rng.fork(static_cast<std::uint64_t>(trial));
    const AngleMask mask = sample_mask(dist, draw);
    const Eigen::MatrixXd A_sub = dense_from_forward(mask, g);
    const double sub_norm = Eigen::BDCSVD<Eigen::MatrixXd>(A_sub).singularValues()(0);
    CHECK(sub_norm <= full_norm * (1.0 + 1e-12));
  }
}

TEST_CASE("grad_data_fidelity algebra") {
  const Geometry g = make_geometry(16, 20);
  const AngleMask mask = equispaced_mask(10, 20);
  RngStream rng(41);
  Image x(16);
  for (auto& v : x.data) v = rng.next_double();

  // Consistent data: gradient must vanish identically.
  Sinogram y = radon_forward_masked(x, mask, g);
  Image grad = grad_data_fidelity(x, y, mask, g);
  for (double v : grad.data) CHECK(v == 0.0);

  // x = 0: gradient is -(MA)^T y.
  Image zero(16, 0.0);
  Image g0 = grad_data_fidelity(zero, y, mask, g);
  Image aty = radon_adjoint_masked(y, mask, g);
  for (std::size_t i = 0; i < g0.data.size(); ++i) {
    CHECK(g0.data[i] == doctest::Approx(-aty.data[i]).epsilon(1e-14));
  }

  // Mask/sinogram mismatch is rejected.
  Sinogram short_y(mask.count() - 1, g.n_detectors);
  CHECK_THROWS_AS(grad_data_fidelity(x, short_y, mask, g), std::invalid_argument);
}

TEST_CASE("dimension mismatches are rejected") {
  const Geometry g = make_geometry(16, 12);
  Image wrong(17, 0.0);
  CHECK_THROWS_AS(radon_forward(wrong, g), std::invalid_argument);
  Sinogram bad(11, g.n_detectors);
  CHECK_THROWS_AS(radon_adjoint(bad, g), std::invalid_argument);
}
