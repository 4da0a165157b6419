#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tsdq/denoiser.hpp"
#include "tsdq/rng.hpp"

using namespace tsdq;

namespace {

DenoiserSpec small_spec(int n_scales, int channels = 4) {
  DenoiserSpec s;
  s.n_scales = n_scales;
  s.channels = channels;
  s.kernel_size = 3;
  s.sn_side = 16;
  return s;
}

Image random_image(int side, std::uint64_t seed) {
  RngStream rng(seed);
  Image x(side);
  for (auto& v : x.data) v = rng.next_gaussian();
  return x;
}

}  // namespace

TEST_CASE("init is deterministic with zero biases and fan-in scaled kernels") {
  const DenoiserSpec spec = small_spec(2, 32);
  const DenoiserParams a = init_denoiser(spec, 42);
  const DenoiserParams b = init_denoiser(spec, 42);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].kernel == b.layers[l].kernel);
    for (double v : a.layers[l].bias) CHECK(v == 0.0);
  }
  // Kaiming fan-in: empirical variance within 20% of 2 / fan_in, pooled
  // over several draws.
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const double fan_in = a.layers[l].in_ch * 9.0;
    double ss = 0.0;
    long n = 0;
    for (std::uint64_t s = 0; s < 8; ++s) {
      const DenoiserParams d = init_denoiser(spec, 100 + s);
      for (double v : d.layers[l].kernel) {
        ss += v * v;
        ++n;
      }
    }
    const double var = ss / static_cast<double>(n);
    CHECK(var == doctest::Approx(2.0 / fan_in).epsilon(0.2));
  }
}

TEST_CASE("zero parameters give the identity (skip) or zero (no skip) map") {
  for (int scales : {1, 2}) {
    DenoiserSpec spec = small_spec(scales);
    DenoiserParams p = init_denoiser(spec, 1);
    for (auto& L : p.layers) std::fill(L.kernel.begin(), L.kernel.end(), 0.0);
    const Image x = random_image(16, 5);
    const Image y = denoiser_forward(p, x);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);

    p.spec.use_skip = false;
    const Image z = denoiser_forward(p, x);
    for (double v : z.data) CHECK(v == 0.0);
  }
}

TEST_CASE("vjp with zero cotangent returns zero gradients") {
  const DenoiserParams p = init_denoiser(small_spec(2), 3);
  const Image x = random_image(16, 6);
  const Image zero(16, 0.0);
  const DenoiserVjpResult r = denoiser_vjp(p, x, zero);
  CHECK(r.param_grads.max_abs() == 0.0);
  for (double v : r.input_grad.data) CHECK(v == 0.0);
}

TEST_CASE("vjp matches central finite differences on parameters and input") {
  const double h = 1e-6;
  for (int scales : {1, 2}) {
    DenoiserParams p = init_denoiser(small_spec(scales), 7 + scales);
    RngStream rng(19);
    for (auto& L : p.layers) {
      for (auto& b : L.bias) b = 0.1 * rng.next_gaussian();
    }
    Image x = random_image(16, 8);
    const Image cot = random_image(16, 9);
    const DenoiserVjpResult vjp = denoiser_vjp(p, x, cot);
    const double scale = std::max(vjp.param_grads.max_abs(), 1e-12);

    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      for (int probe = 0; probe < 5; ++probe) {
        const std::size_t idx = rng.next_below(p.layers[l].kernel.size());
        const double saved = p.layers[l].kernel[idx];
        p.layers[l].kernel[idx] = saved + h;
        const double up = dot(cot.data, denoiser_forward(p, x).data);
        p.layers[l].kernel[idx] = saved - h;
        const double dn = dot(cot.data, denoiser_forward(p, x).data);
        p.layers[l].kernel[idx] = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double analytic = vjp.param_grads.kernel[l][idx];
        CHECK(std::abs(fd - analytic) <
              1e-5 * std::max({std::abs(fd), std::abs(analytic), 1e-6 * scale}));
      }
    }
    double in_scale = 1e-12;
    for (double v : vjp.input_grad.data) in_scale = std::max(in_scale, std::abs(v));
    for (int probe = 0; probe < 20; ++probe) {
      const std::size_t idx = rng.next_below(x.data.size());
      const double saved = x.data[idx];
      x.data[idx] = saved + h;
      const double up = dot(cot.data, denoiser_forward(p, x).data);
      x.data[idx] = saved - h;
      const double dn = dot(cot.data, denoiser_forward(p, x).data);
      x.data[idx] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double analytic = vjp.input_grad.data[idx];
      CHECK(std::abs(fd - analytic) <
            1e-5 * std::max({std::abs(fd), std::abs(analytic), 1e-6 * in_scale}));
    }
  }
}

TEST_CASE("spectral normalization drives every layer norm to one") {
  DenoiserParams p = init_denoiser(small_spec(2, 6), 21);
  // Scale the kernels so the starting norms are clearly off 1.
  for (auto& L : p.layers)
    for (auto& w : L.kernel) w *= 3.0;
  spectral_normalize(p, 50);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const int side = p.spec.sn_side >> p.layers[l].scale;
    const double norm = conv_operator_norm(p.layers[l], side, 50, 777 + l);
    CHECK(norm >= 0.9);
    CHECK(norm <= 1.01);
  }
  // Idempotence: a second pass with converged vectors barely moves kernels.
  const DenoiserParams before = p;
  spectral_normalize(p, 1);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (std::size_t i = 0; i < p.layers[l].kernel.size(); ++i) {
      CHECK(p.layers[l].kernel[i] ==
            doctest::Approx(before.layers[l].kernel[i]).epsilon(1e-3));
    }
  }
}

TEST_CASE("a single 1x1 layer with scalar weight 5 normalizes to weight 1") {
  ConvLayer L;
  L.in_ch = L.out_ch = 1;
  L.ksize = 1;
  L.scale = 0;
  L.kernel = {5.0};
  L.bias = {0.0};
  DenoiserParams p;
  p.spec = small_spec(1, 1);
  p.spec.kernel_size = 1;
  p.seed = 0;
  p.layers = {L, L, L};
  spectral_normalize(p, 30);
  for (const auto& layer : p.layers) {
    CHECK(layer.kernel[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("normalized network is Lipschitz within the layer-count bound") {
  for (int scales : {1, 2}) {
    DenoiserSpec spec = small_spec(scales, 6);
    DenoiserParams p = init_denoiser(spec, 33);
    spectral_normalize(p, 50);
    const double bound =
        std::pow(1.0 + 1e-2, spec.n_layers()) * (spec.use_skip ? 2.0 : 1.0);
    RngStream rng(55);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      Image a = random_image(16, 1000 + trial);
      Image b = random_image(16, 2000 + trial);
      const Image fa = denoiser_forward(p, a);
      const Image fb = denoiser_forward(p, b);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double dxy = fa.data[i] - fb.data[i];
        const double dab = a.data[i] - b.data[i];
        num += dxy * dxy;
        den += dab * dab;
      }
      worst = std::max(worst, std::sqrt(num / den));
    }
    CHECK(worst <= bound);
  }
}

TEST_CASE("plain CNN is translation equivariant away from the boundary") {
  DenoiserSpec spec = small_spec(1, 4);
  spec.use_skip = false;
  const DenoiserParams p = init_denoiser(spec, 44);
  Image x(16, 0.0);
  RngStream rng(61);
  // Content confined to a block so a shift stays inside.
  for (int r = 4; r < 10; ++r)
    for (int c = 4; c < 10; ++c) x.at(r, c) = rng.next_gaussian();
  Image shifted(16, 0.0);
  for (int r = 0; r < 15; ++r)
    for (int c = 0; c < 15; ++c) shifted.at(r + 1, c + 1) = x.at(r, c);
  const Image fx = denoiser_forward(p, x);
  const Image fs = denoiser_forward(p, shifted);
  // Compare on an interior crop, clear of every boundary effect.
  for (int r = 6; r < 12; ++r) {
    for (int c = 6; c < 12; ++c) {
      CHECK(fs.at(r + 1, c + 1) == doctest::Approx(fx.at(r, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("odd shapes are rejected") {
  DenoiserSpec bad = small_spec(1);
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  const DenoiserParams p = init_denoiser(small_spec(2), 9);
  const Image odd_side(15, 0.0);
  CHECK_THROWS_AS(denoiser_forward(p, odd_side), std::invalid_argument);
  const Image x(16, 0.0);
  const Image wrong_cot(8, 0.0);
  CHECK_THROWS_AS(denoiser_vjp(p, x, wrong_cot), std::invalid_argument);
}
