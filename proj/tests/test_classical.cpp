#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tsdq/classical.hpp"
#include "tsdq/metrics.hpp"
#include "tsdq/phantoms.hpp"
#include "tsdq/rng.hpp"

using namespace tsdq;

namespace {

Image shepp(int side) {
  PhantomSpec ps;
  ps.kind = PhantomKind::kSheppLogan;
  ps.side = side;
  return generate_phantom(ps);
}

}  // namespace

TEST_CASE("fbp maps the zero sinogram to the zero image") {
  const Geometry g = make_geometry(32, 20);
  const AngleMask mask = equispaced_mask(10, 20);
  Sinogram zero(10, g.n_detectors);
  const Image r = fbp(zero, mask, g);
  for (double v : r.data) CHECK(v == 0.0);
}

TEST_CASE("fbp on noiseless full-angle data reconstructs the phantom") {
  const Geometry g = make_geometry(64, 180);
  const Image ph = shepp(64);
  const Sinogram y = radon_forward(ph, g);
  const Image r = fbp(y, full_mask(180), g, FbpFilter::kRamLak);
  CHECK(psnr(r, ph, 1.0) >= 20.0);
}

TEST_CASE("fbp quality never improves when the angle count is halved") {
  const Geometry g = make_geometry(64, 180);
  const Image ph = shepp(64);
  const Sinogram y = radon_forward(ph, g);
  double prev = -1e9;
  for (int s : {16, 32, 64}) {
    const AngleMask m = equispaced_mask(s, 180);
    const Image r = fbp(apply_mask(y, m), m, g, FbpFilter::kRamLak);
    const double p = psnr(r, ph, 1.0);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("fbp is linear in the measurements") {
  const Geometry g = make_geometry(16, 12);
  const AngleMask mask = full_mask(12);
  RngStream rng(4);
  Sinogram a(12, g.n_detectors), b(12, g.n_detectors);
  for (auto& v : a.data) v = rng.next_gaussian();
  for (auto& v : b.data) v = rng.next_gaussian();
  Sinogram combo(12, g.n_detectors);
  for (std::size_t i = 0; i < combo.data.size(); ++i) {
    combo.data[i] = 2.0 * a.data[i] - 3.0 * b.data[i];
  }
  const Image fa = fbp(a, mask, g);
  const Image fb = fbp(b, mask, g);
  const Image fc = fbp(combo, mask, g);
  double scale = 0.0;
  for (double v : fc.data) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < fc.data.size(); ++i) {
    CHECK(fc.data[i] ==
          doctest::Approx(2.0 * fa.data[i] - 3.0 * fb.data[i]).epsilon(1e-10).scale(scale));
  }
}

TEST_CASE("fbp filters differ and the none filter skips filtering") {
  const Geometry g = make_geometry(32, 24);
  const Image ph = shepp(32);
  const AngleMask mask = full_mask(24);
  const Sinogram y = radon_forward(ph, g);
  const Image ram = fbp(y, mask, g, FbpFilter::kRamLak);
  const Image sl = fbp(y, mask, g, FbpFilter::kSheppLogan);
  const Image plain = fbp(y, mask, g, FbpFilter::kNone);
  double diff = 0.0;
  for (std::size_t i = 0; i < ram.data.size(); ++i) diff += std::abs(ram.data[i] - sl.data[i]);
  CHECK(diff > 0.0);
  // Unfiltered back-projection is just a scaled adjoint.
  const Image adj = radon_adjoint_masked(y, mask, g);
  const double scale = 3.14159265358979323846 / (2.0 * mask.count());
  for (std::size_t i = 0; i < plain.data.size(); ++i) {
    CHECK(plain.data[i] == doctest::Approx(scale * adj.data[i]).epsilon(1e-14));
  }
}

TEST_CASE("tv recovers a constant image from consistent data with tiny lambda") {
  const Geometry g = make_geometry(16, 24);
  const AngleMask mask = full_mask(24);
  Image constant(16, 0.5);
  const Sinogram y = radon_forward_masked(constant, mask, g);
  TVConfig cfg;
  cfg.lambda = 1e-8;
  cfg.max_iters = 4000;
  cfg.tol = 1e-13;
  const TVResult r = tv_reconstruct(y, mask, g, cfg);
  double max_err = 0.0;
  for (double v : r.x.data) max_err = std::max(max_err, std::abs(v - 0.5));
  CHECK(max_err < 1e-3);
}

TEST_CASE("huge lambda flattens the reconstruction") {
  const Geometry g = make_geometry(16, 24);
  const AngleMask mask = equispaced_mask(12, 24);
  const Image ph = shepp(16);
  const Sinogram y = radon_forward_masked(ph, mask, g);
  TVConfig cfg;
  cfg.lambda = 1e6 * norm2(y.data);
  cfg.max_iters = 3000;
  cfg.tol = 1e-13;
  const TVResult r = tv_reconstruct(y, mask, g, cfg);
  const Image reference = fbp(y, mask, g);
  CHECK(tv_value(r.x) < 1e-6 * tv_value(reference));
}

TEST_CASE("tv beats fbp by a clear margin on a sparse noisy two-ellipse phantom") {
  const Geometry g = make_geometry(32, 60);
  PhantomSpec ps;
  ps.kind = PhantomKind::kRandomEllipses;
  ps.side = 32;
  ps.seed = 7;
  ps.n_min = ps.n_max = 2;
  const Image ph = generate_phantom(ps);
  const AngleMask mask = equispaced_mask(12, 60);
  Sinogram full = radon_forward(ph, g);
  double peak = 0.0;
  for (double v : full.data) peak = std::max(peak, std::abs(v));
  Sinogram y = apply_mask(full, mask);
  RngStream rng(15);
  for (auto& v : y.data) v += 0.01 * peak * rng.next_gaussian();

  double range = 0.0;
  for (double v : ph.data) range = std::max(range, v);
  const Image f = fbp(y, mask, g);
  TVConfig cfg;
  cfg.lambda = 0.2;
  cfg.max_iters = 800;
  const TVResult r = tv_reconstruct(y, mask, g, cfg);
  CHECK(psnr(r.x, ph, range) > psnr(f, ph, range) + 3.0);
}

TEST_CASE("tv output is nonnegative and its published objective is monotone") {
  const Geometry g = make_geometry(16, 20);
  const AngleMask mask = equispaced_mask(10, 20);
  const Image ph = shepp(16);
  Sinogram y = radon_forward_masked(ph, mask, g);
  RngStream rng(2);
  for (auto& v : y.data) v += 0.05 * rng.next_gaussian();
  TVConfig cfg;
  cfg.lambda = 0.3;
  cfg.max_iters = 300;
  const TVResult r = tv_reconstruct(y, mask, g, cfg);
  for (double v : r.x.data) CHECK(v >= 0.0);
  for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
    CHECK(r.objective_history[i] <= r.objective_history[i - 1] + 1e-12);
  }
}

TEST_CASE("lambda zero on full noiseless data reaches tight data fidelity") {
  const Geometry g = make_geometry(16, 24);
  const AngleMask mask = full_mask(24);
  const Image ph = shepp(16);
  const Sinogram y = radon_forward_masked(ph, mask, g);
  TVConfig cfg;
  cfg.lambda = 0.0;
  cfg.max_iters = 4000;
  cfg.tol = 1e-14;
  const TVResult r = tv_reconstruct(y, mask, g, cfg);
  Sinogram fit = radon_forward_masked(r.x, mask, g);
  double err = 0.0;
  for (std::size_t i = 0; i < fit.data.size(); ++i) {
    const double d = fit.data[i] - y.data[i];
    err += d * d;
  }
  CHECK(std::sqrt(err) <= 1e-3 * norm2(y.data));
}

TEST_CASE("tune_tv_lambda returns a grid value") {
  const Geometry g = make_geometry(16, 20);
  const AngleMask mask = equispaced_mask(10, 20);
  const Image ph = shepp(16);
  const Sinogram y = radon_forward_masked(ph, mask, g);
  TVConfig base;
  base.max_iters = 200;
  const double lam = tune_tv_lambda(ph, y, mask, g, base, 1e-3, 1.0, 5);
  CHECK(lam >= 1e-3);
  CHECK(lam <= 1.0);
}
