#include "tsdq/denoiser.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tsdq/rng.hpp"

namespace tsdq {

namespace {

// Channel-major tensor helpers; a tensor is a flat vector with layout
// (channel, row, col) on a square spatial grid.

std::size_t tsize(int ch, int side) {
  return static_cast<std::size_t>(ch) * side * side;
}

// Zero-padded stride-1 convolution, out[oc] = bias[oc] + sum_ic K[oc,ic] * in[ic].
// Shift-and-accumulate ordering keeps the inner loop contiguous.
void conv_forward_raw(const ConvLayer& L, const double* in, double* out, int side,
                      bool with_bias) {
  const int k = L.ksize;
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (int oc = 0; oc < L.out_ch; ++oc) {
    double* op = out + oc * plane;
    const double b = with_bias ? L.bias[static_cast<std::size_t>(oc)] : 0.0;
    std::fill(op, op + plane, b);
    for (int ic = 0; ic < L.in_ch; ++ic) {
      const double* ip = in + ic * plane;
      const double* kp =
          L.kernel.data() + (static_cast<std::size_t>(oc) * L.in_ch + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int y_lo = std::max(0, r - ky);
        const int y_hi = std::min(side, side + r - ky);
        for (int kx = 0; kx < k; ++kx) {
          const double w = kp[ky * k + kx];
          if (w == 0.0) continue;
          const int x_lo = std::max(0, r - kx);
          const int x_hi = std::min(side, side + r - kx);
          for (int y = y_lo; y < y_hi; ++y) {
            double* orow = op + static_cast<std::size_t>(y) * side;
            const double* irow = ip + static_cast<std::size_t>(y + ky - r) * side + (kx - r);
            for (int x = x_lo; x < x_hi; ++x) orow[x] += w * irow[x];
          }
        }
      }
    }
  }
}

// Adjoint of conv_forward_raw with respect to the input.
void conv_backward_input_raw(const ConvLayer& L, const double* up, double* in_grad, int side) {
  const int k = L.ksize;
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  std::fill(in_grad, in_grad + tsize(L.in_ch, side), 0.0);
  for (int oc = 0; oc < L.out_ch; ++oc) {
    const double* upp = up + oc * plane;
    for (int ic = 0; ic < L.in_ch; ++ic) {
      double* gp = in_grad + ic * plane;
      const double* kp =
          L.kernel.data() + (static_cast<std::size_t>(oc) * L.in_ch + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int y_lo = std::max(0, r - ky);
        const int y_hi = std::min(side, side + r - ky);
        for (int kx = 0; kx < k; ++kx) {
          const double w = kp[ky * k + kx];
          if (w == 0.0) continue;
          const int x_lo = std::max(0, r - kx);
          const int x_hi = std::min(side, side + r - kx);
          for (int y = y_lo; y < y_hi; ++y) {
            const double* urow = upp + static_cast<std::size_t>(y) * side;
            double* grow = gp + static_cast<std::size_t>(y + ky - r) * side + (kx - r);
            for (int x = x_lo; x < x_hi; ++x) grow[x] += w * urow[x];
          }
        }
      }
    }
  }
}

void conv_backward_params_raw(const ConvLayer& L, const double* in, const double* up,
                              double* kernel_grad, double* bias_grad, int side) {
  const int k = L.ksize;
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (int oc = 0; oc < L.out_ch; ++oc) {
    const double* upp = up + oc * plane;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) bsum += upp[i];
    bias_grad[oc] += bsum;
    for (int ic = 0; ic < L.in_ch; ++ic) {
      const double* ip = in + ic * plane;
      double* kg = kernel_grad + (static_cast<std::size_t>(oc) * L.in_ch + ic) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int y_lo = std::max(0, r - ky);
        const int y_hi = std::min(side, side + r - ky);
        for (int kx = 0; kx < k; ++kx) {
          const int x_lo = std::max(0, r - kx);
          const int x_hi = std::min(side, side + r - kx);
          double acc = 0.0;
          for (int y = y_lo; y < y_hi; ++y) {
            const double* urow = upp + static_cast<std::size_t>(y) * side;
            const double* irow = ip + static_cast<std::size_t>(y + ky - r) * side + (kx - r);
            for (int x = x_lo; x < x_hi; ++x) acc += urow[x] * irow[x];
          }
          kg[ky * k + kx] += acc;
        }
      }
    }
  }
}

void avgpool2(const double* in, double* out, int ch, int side) {
  const int half = side / 2;
  for (int c = 0; c < ch; ++c) {
    const double* ip = in + static_cast<std::size_t>(c) * side * side;
    double* op = out + static_cast<std::size_t>(c) * half * half;
    for (int y = 0; y < half; ++y) {
      for (int x = 0; x < half; ++x) {
        const double* a = ip + static_cast<std::size_t>(2 * y) * side + 2 * x;
        const double* b = a + side;
        op[static_cast<std::size_t>(y) * half + x] = 0.25 * (a[0] + a[1] + b[0] + b[1]);
      }
    }
  }
}

void avgpool2_backward(const double* up, double* in_grad, int ch, int side) {
  const int half = side / 2;
  std::fill(in_grad, in_grad + tsize(ch, side), 0.0);
  for (int c = 0; c < ch; ++c) {
    const double* upp = up + static_cast<std::size_t>(c) * half * half;
    double* gp = in_grad + static_cast<std::size_t>(c) * side * side;
    for (int y = 0; y < half; ++y) {
      for (int x = 0; x < half; ++x) {
        const double v = 0.25 * upp[static_cast<std::size_t>(y) * half + x];
        double* a = gp + static_cast<std::size_t>(2 * y) * side + 2 * x;
        double* b = a + side;
        a[0] += v;
        a[1] += v;
        b[0] += v;
        b[1] += v;
      }
    }
  }
}

void upsample2(const double* in, double* out, int ch, int half) {
  const int side = 2 * half;
  for (int c = 0; c < ch; ++c) {
    const double* ip = in + static_cast<std::size_t>(c) * half * half;
    double* op = out + static_cast<std::size_t>(c) * side * side;
    for (int y = 0; y < side; ++y) {
      const double* irow = ip + static_cast<std::size_t>(y / 2) * half;
      double* orow = op + static_cast<std::size_t>(y) * side;
      for (int x = 0; x < side; ++x) orow[x] = irow[x / 2];
    }
  }
}

void upsample2_backward(const double* up, double* in_grad, int ch, int half) {
  const int side = 2 * half;
  std::fill(in_grad, in_grad + tsize(ch, half), 0.0);
  for (int c = 0; c < ch; ++c) {
    const double* upp = up + static_cast<std::size_t>(c) * side * side;
    double* gp = in_grad + static_cast<std::size_t>(c) * half * half;
    for (int y = 0; y < side; ++y) {
      const double* urow = upp + static_cast<std::size_t>(y) * side;
      double* grow = gp + static_cast<std::size_t>(y / 2) * half;
      for (int x = 0; x < side; ++x) grow[x / 2] += urow[x];
    }
  }
}

void activate(const DenoiserSpec& spec, const double* pre, double* post, std::size_t n) {
  const double a = spec.activation == Activation::kRelu ? 0.0 : spec.leaky_slope;
  for (std::size_t i = 0; i < n; ++i) post[i] = pre[i] > 0.0 ? pre[i] : a * pre[i];
}

void activate_backward(const DenoiserSpec& spec, const double* pre, const double* up,
                       double* down, std::size_t n) {
  const double a = spec.activation == Activation::kRelu ? 0.0 : spec.leaky_slope;
  for (std::size_t i = 0; i < n; ++i) down[i] = pre[i] > 0.0 ? up[i] : a * up[i];
}

// Every intermediate of one forward pass, kept for the backward sweep.
struct Tape {
  int side = 0;
  std::vector<double> pre0, h0;       // full res, C channels
  std::vector<double> pooled;         // half res (2-scale only)
  std::vector<double> pre1, h1;       // half res
  std::vector<double> up;             // full res
  std::vector<double> cat;            // 2C channels (2-scale only)
  std::vector<double> pre2, h2;       // full res (2-scale: after L2; 1-scale: after L1)
  std::vector<double> out;            // 1 channel
};

void forward_with_tape(const DenoiserParams& p, const Image& x, Tape& t) {
  const DenoiserSpec& spec = p.spec;
  const int n = x.side;
  const int c = spec.channels;
  if (spec.n_scales == 2 && n % 2 != 0) {
    throw std::invalid_argument("denoiser_forward: side must be divisible by 2 for 2 scales");
  }
  t.side = n;
  if (spec.n_scales == 1) {
    t.pre0.resize(tsize(c, n));
    conv_forward_raw(p.layers[0], x.data.data(), t.pre0.data(), n, true);
    t.h0.resize(t.pre0.size());
    activate(spec, t.pre0.data(), t.h0.data(), t.pre0.size());
    t.pre2.resize(tsize(c, n));
    conv_forward_raw(p.layers[1], t.h0.data(), t.pre2.data(), n, true);
    t.h2.resize(t.pre2.size());
    activate(spec, t.pre2.data(), t.h2.data(), t.pre2.size());
    t.out.resize(tsize(1, n));
    conv_forward_raw(p.layers[2], t.h2.data(), t.out.data(), n, true);
    return;
  }
  const int half = n / 2;
  t.pre0.resize(tsize(c, n));
  conv_forward_raw(p.layers[0], x.data.data(), t.pre0.data(), n, true);
  t.h0.resize(t.pre0.size());
  activate(spec, t.pre0.data(), t.h0.data(), t.pre0.size());
  t.pooled.resize(tsize(c, half));
  avgpool2(t.h0.data(), t.pooled.data(), c, n);
  t.pre1.resize(tsize(c, half));
  conv_forward_raw(p.layers[1], t.pooled.data(), t.pre1.data(), half, true);
  t.h1.resize(t.pre1.size());
  activate(spec, t.pre1.data(), t.h1.data(), t.pre1.size());
  t.up.resize(tsize(c, n));
  upsample2(t.h1.data(), t.up.data(), c, half);
  t.cat.resize(tsize(2 * c, n));
  std::copy(t.h0.begin(), t.h0.end(), t.cat.begin());
  std::copy(t.up.begin(), t.up.end(), t.cat.begin() + static_cast<std::ptrdiff_t>(t.h0.size()));
  t.pre2.resize(tsize(c, n));
  conv_forward_raw(p.layers[2], t.cat.data(), t.pre2.data(), n, true);
  t.h2.resize(t.pre2.size());
  activate(spec, t.pre2.data(), t.h2.data(), t.pre2.size());
  t.out.resize(tsize(1, n));
  conv_forward_raw(p.layers[3], t.h2.data(), t.out.data(), n, true);
}

}  // namespace

void DenoiserSpec::validate() const {
  if (n_scales < 1 || n_scales > 2) throw std::invalid_argument("DenoiserSpec: n_scales in {1,2}");
  if (channels < 1) throw std::invalid_argument("DenoiserSpec: channels >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("DenoiserSpec: kernel_size must be odd");
  }
  if (sn_power_iters < 0) throw std::invalid_argument("DenoiserSpec: sn_power_iters >= 0");
  if (sn_side < 2) throw std::invalid_argument("DenoiserSpec: sn_side >= 2");
}

std::size_t DenoiserParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers) n += L.kernel.size() + L.bias.size();
  return n;
}

DenoiserGrads DenoiserGrads::zeros_like(const DenoiserParams& p) {
  DenoiserGrads g;
  g.kernel.reserve(p.layers.size());
  g.bias.reserve(p.layers.size());
  for (const auto& L : p.layers) {
    g.kernel.emplace_back(L.kernel.size(), 0.0);
    g.bias.emplace_back(L.bias.size(), 0.0);
  }
  return g;
}

void DenoiserGrads::accumulate(const DenoiserGrads& other, double scale) {
  for (std::size_t l = 0; l < kernel.size(); ++l) {
    axpy(scale, other.kernel[l], kernel[l]);
    axpy(scale, other.bias[l], bias[l]);
  }
}

void DenoiserGrads::scale_by(double s) {
  for (auto& k : kernel)
    for (auto& v : k) v *= s;
  for (auto& b : bias)
    for (auto& v : b) v *= s;
}

double DenoiserGrads::max_abs() const {
  double m = 0.0;
  for (const auto& k : kernel)
    for (double v : k) m = std::max(m, std::abs(v));
  for (const auto& b : bias)
    for (double v : b) m = std::max(m, std::abs(v));
  return m;
}

bool DenoiserGrads::all_finite() const {
  for (const auto& k : kernel)
    for (double v : k)
      if (!std::isfinite(v)) return false;
  for (const auto& b : bias)
    for (double v : b)
      if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> DenoiserGrads::flatten() const {
  std::vector<double> flat;
  for (std::size_t l = 0; l < kernel.size(); ++l) {
    flat.insert(flat.end(), kernel[l].begin(), kernel[l].end());
    flat.insert(flat.end(), bias[l].begin(), bias[l].end());
  }
  return flat;
}

DenoiserParams init_denoiser(const DenoiserSpec& spec, std::uint64_t seed) {
  spec.validate();
  DenoiserParams p;
  p.spec = spec;
  p.seed = seed;
  const int c = spec.channels;
  const int k = spec.kernel_size;
  std::vector<std::array<int, 3>> shape;  // in_ch, out_ch, scale
  if (spec.n_scales == 1) {
    shape = {{1, c, 0}, {c, c, 0}, {c, 1, 0}};
  } else {
    shape = {{1, c, 0}, {c, c, 1}, {2 * c, c, 0}, {c, 1, 0}};
  }
  RngStream root(seed);
  for (std::size_t l = 0; l < shape.size(); ++l) {
    ConvLayer L;
    L.in_ch = shape[l][0];
    L.out_ch = shape[l][1];
    L.scale = shape[l][2];
    L.ksize = k;
    L.kernel.resize(static_cast<std::size_t>(L.out_ch) * L.in_ch * k * k);
    L.bias.assign(static_cast<std::size_t>(L.out_ch), 0.0);
    const double stddev = std::sqrt(2.0 / (static_cast<double>(L.in_ch) * k * k));
    RngStream lr = root.fork(l);
    for (auto& w : L.kernel) w = stddev * lr.next_gaussian();
    p.layers.push_back(std::move(L));
  }
  return p;
}

Image denoiser_forward(const DenoiserParams& p, const Image& x) {
  Tape t;
  forward_with_tape(p, x, t);
  Image y(x.side);
  if (p.spec.use_skip) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = x.data[i] + t.out[i];
  } else {
    y.data = t.out;
  }
  return y;
}

DenoiserVjpResult denoiser_vjp(const DenoiserParams& p, const Image& x, const Image& cotangent) {
  if (cotangent.side != x.side) {
    throw std::invalid_argument("denoiser_vjp: cotangent shape mismatch");
  }
  Tape t;
  forward_with_tape(p, x, t);
  const DenoiserSpec& spec = p.spec;
  const int n = x.side;
  const int c = spec.channels;

  DenoiserVjpResult res;
  res.param_grads = DenoiserGrads::zeros_like(p);
  res.input_grad = Image(n, 0.0);

  // d(out); the skip branch adds the cotangent to the input gradient at the end.
  const std::vector<double>& d_out = cotangent.data;

  if (spec.n_scales == 1) {
    std::vector<double> d_h2(tsize(c, n));
    conv_backward_params_raw(p.layers[2], t.h2.data(), d_out.data(),
                             res.param_grads.kernel[2].data(), res.param_grads.bias[2].data(),
                             n);
    conv_backward_input_raw(p.layers[2], d_out.data(), d_h2.data(), n);
    std::vector<double> d_pre2(d_h2.size());
    activate_backward(spec, t.pre2.data(), d_h2.data(), d_pre2.data(), d_h2.size());
    std::vector<double> d_h0(tsize(c, n));
    conv_backward_params_raw(p.layers[1], t.h0.data(), d_pre2.data(),
                             res.param_grads.kernel[1].data(), res.param_grads.bias[1].data(),
                             n);
    conv_backward_input_raw(p.layers[1], d_pre2.data(), d_h0.data(), n);
    std::vector<double> d_pre0(d_h0.size());
    activate_backward(spec, t.pre0.data(), d_h0.data(), d_pre0.data(), d_h0.size());
    conv_backward_params_raw(p.layers[0], x.data.data(), d_pre0.data(),
                             res.param_grads.kernel[0].data(), res.param_grads.bias[0].data(),
                             n);
    conv_backward_input_raw(p.layers[0], d_pre0.data(), res.input_grad.data.data(), n);
  } else {
    const int half = n / 2;
    std::vector<double> d_h2(tsize(c, n));
    conv_backward_params_raw(p.layers[3], t.h2.data(), d_out.data(),
                             res.param_grads.kernel[3].data(), res.param_grads.bias[3].data(),
                             n);
    conv_backward_input_raw(p.layers[3], d_out.data(), d_h2.data(), n);
    std::vector<double> d_pre2(d_h2.size());
    activate_backward(spec, t.pre2.data(), d_h2.data(), d_pre2.data(), d_h2.size());
    std::vector<double> d_cat(tsize(2 * c, n));
    conv_backward_params_raw(p.layers[2], t.cat.data(), d_pre2.data(),
                             res.param_grads.kernel[2].data(), res.param_grads.bias[2].data(),
                             n);
    conv_backward_input_raw(p.layers[2], d_pre2.data(), d_cat.data(), n);
    // First C channels flow to h0 directly, the rest through the upsample.
    std::vector<double> d_h1(tsize(c, half));
    upsample2_backward(d_cat.data() + tsize(c, n), d_h1.data(), c, half);
    std::vector<double> d_pre1(d_h1.size());
    activate_backward(spec, t.pre1.data(), d_h1.data(), d_pre1.data(), d_h1.size());
    std::vector<double> d_pooled(tsize(c, half));
    conv_backward_params_raw(p.layers[1], t.pooled.data(), d_pre1.data(),
                             res.param_grads.kernel[1].data(), res.param_grads.bias[1].data(),
                             half);
    conv_backward_input_raw(p.layers[1], d_pre1.data(), d_pooled.data(), half);
    std::vector<double> d_h0(tsize(c, n));
    avgpool2_backward(d_pooled.data(), d_h0.data(), c, n);
    for (std::size_t i = 0; i < d_h0.size(); ++i) d_h0[i] += d_cat[i];
    std::vector<double> d_pre0(d_h0.size());
    activate_backward(spec, t.pre0.data(), d_h0.data(), d_pre0.data(), d_h0.size());
    conv_backward_params_raw(p.layers[0], x.data.data(), d_pre0.data(),
                             res.param_grads.kernel[0].data(), res.param_grads.bias[0].data(),
                             n);
    conv_backward_input_raw(p.layers[0], d_pre0.data(), res.input_grad.data.data(), n);
  }

  if (spec.use_skip) {
    for (std::size_t i = 0; i < res.input_grad.data.size(); ++i) {
      res.input_grad.data[i] += cotangent.data[i];
    }
  }
  return res;
}

namespace {

void ensure_sn_state(ConvLayer& L, int side, std::uint64_t seed, std::size_t layer_index) {
  const std::size_t dn = tsize(L.in_ch, side);
  const std::size_t rn = tsize(L.out_ch, side);
  if (L.sn_v.size() == dn && L.sn_u.size() == rn) return;
  RngStream rng = RngStream(seed).fork(0x53u, layer_index);
  L.sn_v.resize(dn);
  for (auto& e : L.sn_v) e = rng.next_gaussian();
  const double n = norm2(L.sn_v);
  for (auto& e : L.sn_v) e /= n;
  L.sn_u.assign(rn, 0.0);
  L.sn_sigma = 0.0;
}

double sn_iterate(ConvLayer& L, int side, int n_iters) {
  std::vector<double> w(tsize(L.out_ch, side));
  for (int it = 0; it < n_iters; ++it) {
    conv_forward_raw(L, L.sn_v.data(), w.data(), side, false);
    const double nw = norm2(w);
    if (nw == 0.0) return 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) L.sn_u[i] = w[i] / nw;
    conv_backward_input_raw(L, L.sn_u.data(), L.sn_v.data(), side);
    const double nv = norm2(L.sn_v);
    if (nv == 0.0) return 0.0;
    for (auto& e : L.sn_v) e /= nv;
  }
  conv_forward_raw(L, L.sn_v.data(), w.data(), side, false);
  return norm2(w);
}

}  // namespace

void spectral_normalize(DenoiserParams& p, int n_iters) {
  if (n_iters < 1) n_iters = 1;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    ConvLayer& L = p.layers[l];
    const int side = std::max(2, p.spec.sn_side >> L.scale);
    ensure_sn_state(L, side, p.seed, l);
    const double sigma = sn_iterate(L, side, n_iters);
    L.sn_sigma = sigma;
    if (sigma > 0.0) {
      const double inv = 1.0 / sigma;
      for (auto& w : L.kernel) w *= inv;
    }
  }
}

double conv_operator_norm(const ConvLayer& layer, int side, int n_iters, std::uint64_t seed) {
  ConvLayer probe = layer;
  probe.sn_u.clear();
  probe.sn_v.clear();
  ensure_sn_state(probe, side, seed, 0xFEEDu);
  return sn_iterate(probe, side, n_iters);
}

}  // namespace tsdq
