#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsdq/deq.hpp"
#include "tsdq/sampling.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

/// Two masked, independently noised measurements of the same image.
struct MeasurementPair {
  Sinogram y;
  AngleMask mask;
  Sinogram y_prime;
  AngleMask mask_prime;
  std::optional<Image> ground_truth;
};

struct NoiseConfig {
  double relative_level = 0.0;  ///< sigma = relative_level * max|clean full sinogram|
  std::uint64_t seed = 0;

  void validate() const;
};

enum class LossKind { kSelfWeighted, kSupOperator, kSupPlain };

enum class OptimizerKind { kAdam, kAdamPolyak };

struct TrainConfig {
  LossKind loss_kind = LossKind::kSelfWeighted;
  double lr = 2e-4;
  int batch_size = 8;
  int n_epochs = 1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  DEQConfig deq;
  MaskDistribution sampling;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  int val_count = 0;  ///< images held out from the tail of the dataset
  int val_s = 0;      ///< equispaced angle count for the validation mask

  void validate() const;
};

/// Projects one image: computes the full sinogram once, draws the mask
/// pair per the sampling mode, and adds independent Gaussian noise to each
/// masked copy.
MeasurementPair make_training_pair(const Image& x, const Geometry& g,
                                   const MaskDistribution& sampling, const NoiseConfig& noise,
                                   RngStream& rng);

struct LossEval {
  double value = 0.0;
  Image cotangent;  ///< dL/dx at the evaluation point
};

/// Weighted projection-domain loss 0.5 || M'A x - y' ||^2_W.
LossEval loss_self(const Image& x_bar, const MeasurementPair& pair, const WeightDiagonal& w,
                   const Geometry& g);

/// Operator-weighted supervised loss 0.5 || A (x - x_gt) ||^2.
LossEval loss_sup_operator(const Image& x_bar, const Image& x_gt, const Geometry& g);

/// Plain supervised loss 0.5 || x - x_gt ||^2 (scaled with the same 1/2
/// factor as the other losses so gradients are comparable).
LossEval loss_sup_plain(const Image& x_bar, const Image& x_gt);

struct JfbBatchResult {
  DenoiserGrads grads;
  double mean_loss = 0.0;
  double mean_fp_iters = 0.0;
  bool finite = true;
};

/// Jacobian-free parameter gradient, averaged over the batch. Per item:
/// solve for the equilibrium without derivative tracking, take one tracked
/// application of the operator, evaluate the loss there, and backpropagate
/// the cotangent through that single application only (clamp backward rule:
/// pass-through where the pre-projection value is positive).
JfbBatchResult jfb_gradient(const std::vector<MeasurementPair>& batch, const DenoiserParams& p,
                            const TrainConfig& cfg, const Geometry& g);

/// Parameter-path backward sweep of one operator application at x: returns
/// (d T(x) / d theta)^T cotangent. gamma must be resolved.
DenoiserGrads jfb_backprop_operator(const Image& x, const Sinogram& y, const AngleMask& mask,
                                    const DenoiserParams& p, const DEQConfig& deq,
                                    const Geometry& g, const Image& cotangent);

struct AdamState {
  std::vector<std::vector<double>> m_kernel, v_kernel;
  std::vector<std::vector<double>> m_bias, v_bias;
  long step_count = 0;

  static AdamState zeros_like(const DenoiserParams& p);
};

/// Standard Adam update (bias-corrected moments), applied in place.
void adam_step(AdamState& state, DenoiserParams& p, const DenoiserGrads& grads, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EpochRecord {
  int epoch = 0;
  LossKind loss_kind = LossKind::kSelfWeighted;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  double mean_fp_iters = 0.0;
};

/// Fixed validation protocol shared by training and the baselines: the
/// equispaced mask and one frozen noise realization per held-out image.
struct ValidationItem {
  Image ground_truth;
  Sinogram y;
  double data_range = 1.0;
};

std::vector<ValidationItem> build_validation_set(const std::vector<Image>& val_images,
                                                 const AngleMask& val_mask,
                                                 const NoiseConfig& noise, const Geometry& g);

struct TrainResult {
  DenoiserParams params;
  std::vector<EpochRecord> history;
};

/// Full training loop: shuffled mini-batches with masks and noise redrawn
/// every batch, spectral normalization after every optimizer step, and a
/// fixed equispaced-mask validation pass per epoch. Deterministic per
/// (dataset, cfg, geometry) for any worker count.
TrainResult train(const std::vector<Image>& dataset, const TrainConfig& cfg, const Geometry& g,
                  const DenoiserSpec& spec);

/// Resumable variant: continues from existing params / optimizer state.
TrainResult train_from(const std::vector<Image>& dataset, const TrainConfig& cfg,
                       const Geometry& g, DenoiserParams params, AdamState adam,
                       int first_epoch);

std::string loss_kind_name(LossKind k);

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace tsdq
