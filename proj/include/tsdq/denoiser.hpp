#pragma once

#include <cstdint>
#include <vector>

#include "tsdq/types.hpp"

namespace tsdq {

enum class Activation { kRelu, kLeakyRelu };

/// Architecture of the learned correction network: a small convolutional
/// encoder/decoder. n_scales = 1 is a plain 3-conv CNN; n_scales = 2 adds
/// one average-pool / nearest-upsample level with a channel concatenation
/// back to full resolution.
struct DenoiserSpec {
  int n_scales = 2;
  int channels = 16;
  int kernel_size = 3;
  Activation activation = Activation::kLeakyRelu;
  double leaky_slope = 0.1;
  bool use_skip = true;      ///< output = input + correction
  int sn_power_iters = 1;    ///< power iterations per training step
  int sn_side = 32;          ///< resolution at which conv operator norms are estimated

  void validate() const;
  int n_layers() const { return n_scales == 1 ? 3 : 4; }
};

struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 0;
  int scale = 0;  ///< 0: full resolution, 1: half resolution
  std::vector<double> kernel;  ///< out_ch * in_ch * k * k
  std::vector<double> bias;    ///< out_ch
  // Persistent power-iteration state for spectral normalization of the
  // zero-padded convolution operator at sn_side >> scale.
  std::vector<double> sn_u;    ///< range-shaped singular vector estimate
  std::vector<double> sn_v;    ///< domain-shaped singular vector estimate
  double sn_sigma = 0.0;       ///< latest operator-norm estimate

  std::size_t kernel_count() const { return kernel.size(); }
};

struct DenoiserParams {
  DenoiserSpec spec;
  std::vector<ConvLayer> layers;
  std::uint64_t seed = 0;

  std::size_t parameter_count() const;
};

/// Gradients shaped like the trainable tensors of DenoiserParams.
struct DenoiserGrads {
  std::vector<std::vector<double>> kernel;
  std::vector<std::vector<double>> bias;

  static DenoiserGrads zeros_like(const DenoiserParams& p);
  void accumulate(const DenoiserGrads& other, double scale = 1.0);
  void scale_by(double s);
  double max_abs() const;
  bool all_finite() const;
  std::vector<double> flatten() const;
};

/// Kaiming-style fan-in initialization, zero biases; deterministic per seed.
DenoiserParams init_denoiser(const DenoiserSpec& spec, std::uint64_t seed);

/// Network forward pass; input side must be divisible by 2^(n_scales-1).
Image denoiser_forward(const DenoiserParams& p, const Image& x);

struct DenoiserVjpResult {
  DenoiserGrads param_grads;
  Image input_grad;
};

/// Exact reverse-mode derivatives of denoiser_forward at (p, x) contracted
/// with the cotangent.
DenoiserVjpResult denoiser_vjp(const DenoiserParams& p, const Image& x, const Image& cotangent);

/// Runs n_iters of power iteration per layer on the convolution operator
/// (linear part, at the spec's sn_side resolution) and divides each kernel
/// by its norm estimate. Persistent vectors are warm-started across calls.
void spectral_normalize(DenoiserParams& p, int n_iters);

/// Independent norm probe of one layer's conv operator (fresh vectors).
double conv_operator_norm(const ConvLayer& layer, int side, int n_iters, std::uint64_t seed);

}  // namespace tsdq
