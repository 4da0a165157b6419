#include "tsdq/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tsdq/csv.hpp"
#include "tsdq/metrics.hpp"
#include "tsdq/parallel.hpp"
#include "tsdq/radon.hpp"

namespace tsdq {

void NoiseConfig::validate() const {
  if (relative_level < 0.0) throw std::invalid_argument("NoiseConfig: level must be >= 0");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (n_epochs < 0) throw std::invalid_argument("TrainConfig: n_epochs >= 0");
  noise.validate();
  sampling.validate();
}

MeasurementPair make_training_pair(const Image& x, const Geometry& g,
                                   const MaskDistribution& sampling, const NoiseConfig& noise,
                                   RngStream& rng) {
  Sinogram full = radon_forward(x, g);
  double peak = 0.0;
  for (double v : full.data) peak = std::max(peak, std::abs(v));
  const double sigma = noise.relative_level * peak;

  MeasurementPair pair;
  if (sampling.kind == MaskKind::kComplementarySplit) {
    auto [m, m_prime] = split_complementary(sampling, rng);
    pair.mask = std::move(m);
    pair.mask_prime = std::move(m_prime);
  } else {
    pair.mask = sample_mask(sampling, rng);
    pair.mask_prime = sample_mask(sampling, rng);
  }
  pair.y = apply_mask(full, pair.mask);
  pair.y_prime = apply_mask(full, pair.mask_prime);
  if (sigma > 0.0) {
    for (auto& v : pair.y.data) v += sigma * rng.next_gaussian();
    for (auto& v : pair.y_prime.data) v += sigma * rng.next_gaussian();
  }
  return pair;
}

LossEval loss_self(const Image& x_bar, const MeasurementPair& pair, const WeightDiagonal& w,
                   const Geometry& g) {
  if (x_bar.side != g.n_pixels) throw std::invalid_argument("loss_self: shape mismatch");
  Sinogram residual = radon_forward_masked(x_bar, pair.mask_prime, g);
  for (std::size_t i = 0; i < residual.data.size(); ++i) {
    residual.data[i] -= pair.y_prime.data[i];
  }
  LossEval out;
  out.value = 0.5 * weighted_residual_norm_sq(residual, pair.mask_prime, w);
  // Cotangent (M'A)^T W r: the diagonal weighting squares on the residual.
  Sinogram weighted = residual;
  for (int j = 0; j < weighted.n_angles; ++j) {
    const double wj = w.for_angle(pair.mask_prime.indices[static_cast<std::size_t>(j)]);
    const double w2 = wj * wj;
    double* row = weighted.data.data() + static_cast<std::size_t>(j) * weighted.n_detectors;
    for (int d = 0; d < weighted.n_detectors; ++d) row[d] *= w2;
  }
  out.cotangent = radon_adjoint_masked(weighted, pair.mask_prime, g);
  return out;
}

LossEval loss_sup_operator(const Image& x_bar, const Image& x_gt, const Geometry& g) {
  if (x_bar.side != x_gt.side) throw std::invalid_argument("loss_sup_operator: shape mismatch");
  Image diff(x_bar.side);
  for (std::size_t i = 0; i < diff.data.size(); ++i) {
    diff.data[i] = x_bar.data[i] - x_gt.data[i];
  }
  Sinogram proj = radon_forward(diff, g);
  LossEval out;
  out.value = 0.5 * dot(proj.data, proj.data);
  out.cotangent = radon_adjoint(proj, g);
  return out;
}

LossEval loss_sup_plain(const Image& x_bar, const Image& x_gt) {
  if (x_bar.side != x_gt.side) throw std::invalid_argument("loss_sup_plain: shape mismatch");
  LossEval out;
  out.cotangent = Image(x_bar.side);
  double acc = 0.0;
  for (std::size_t i = 0; i < x_bar.data.size(); ++i) {
    const double d = x_bar.data[i] - x_gt.data[i];
    out.cotangent.data[i] = d;
    acc += d * d;
  }
  out.value = 0.5 * acc;
  return out;
}

namespace {

struct ItemGrad {
  DenoiserGrads grads;
  double loss = 0.0;
  double fp_iters = 0.0;
  bool finite = true;
};

LossEval evaluate_loss(const Image& x_hat, const MeasurementPair& pair, const TrainConfig& cfg,
                       const Geometry& g, const WeightDiagonal& w) {
  switch (cfg.loss_kind) {
    case LossKind::kSelfWeighted:
      return loss_self(x_hat, pair, w, g);
    case LossKind::kSupOperator:
      if (!pair.ground_truth) {
        throw std::invalid_argument("jfb_gradient: supervised loss needs ground truth");
      }
      return loss_sup_operator(x_hat, *pair.ground_truth, g);
    case LossKind::kSupPlain:
      if (!pair.ground_truth) {
        throw std::invalid_argument("jfb_gradient: supervised loss needs ground truth");
      }
      return loss_sup_plain(x_hat, *pair.ground_truth);
  }
  throw std::logic_error("jfb_gradient: unknown loss kind");
}

// Backpropagates a loss cotangent through one application of the operator
// at x (parameter path only): clamp mask, then the alpha * f(s) branch.
DenoiserGrads backprop_single_application(const Image& x, const Sinogram& y,
                                          const AngleMask& mask, const DenoiserParams& p,
                                          const DEQConfig& cfg, const Geometry& g,
                                          const Image& cotangent, Image* pre_projection) {
  Image grad = grad_data_fidelity(x, y, mask, g);
  Image s(x.side);
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    s.data[i] = x.data[i] - cfg.gamma * grad.data[i];
  }
  Image fs = denoiser_forward(p, s);
  Image masked_cot(x.side);
  for (std::size_t i = 0; i < masked_cot.data.size(); ++i) {
    const double z = cfg.alpha * fs.data[i] + (1.0 - cfg.alpha) * s.data[i];
    if (pre_projection) pre_projection->data[i] = z > 0.0 ? z : 0.0;
    // Positive-orthant projection: pass-through where the pre-projection
    // value is positive, zero elsewhere.
    masked_cot.data[i] = z > 0.0 ? cfg.alpha * cotangent.data[i] : 0.0;
  }
  return denoiser_vjp(p, s, masked_cot).param_grads;
}

ItemGrad jfb_item(const MeasurementPair& pair, const DenoiserParams& p, const TrainConfig& cfg,
                  const Geometry& g, const WeightDiagonal& w) {
  ItemGrad out;
  FixedPointResult fp = fixed_point_solve(pair.y, pair.mask, p, cfg.deq, g);
  out.fp_iters = fp.n_iters;
  // One tracked application of the operator at the equilibrium; the loss is
  // evaluated at its output, which coincides with the equilibrium up to the
  // solver tolerance.
  Image x_hat = apply_t_theta(fp.x_bar, pair.y, pair.mask, p, cfg.deq, g);
  LossEval loss = evaluate_loss(x_hat, pair, cfg, g, w);
  out.loss = loss.value;
  out.grads = backprop_single_application(fp.x_bar, pair.y, pair.mask, p, cfg.deq, g,
                                          loss.cotangent, nullptr);
  out.finite = out.grads.all_finite() && std::isfinite(out.loss);
  return out;
}

}  // namespace

DenoiserGrads jfb_backprop_operator(const Image& x, const Sinogram& y, const AngleMask& mask,
                                    const DenoiserParams& p, const DEQConfig& deq,
                                    const Geometry& g, const Image& cotangent) {
  if (deq.gamma_mode != GammaMode::kFixed) {
    throw std::invalid_argument("jfb_backprop_operator: gamma must be resolved");
  }
  return backprop_single_application(x, y, mask, p, deq, g, cotangent, nullptr);
}

JfbBatchResult jfb_gradient(const std::vector<MeasurementPair>& batch, const DenoiserParams& p,
                            const TrainConfig& cfg, const Geometry& g) {
  if (batch.empty()) throw std::invalid_argument("jfb_gradient: empty batch");
  if (cfg.deq.gamma_mode != GammaMode::kFixed) {
    throw std::invalid_argument("jfb_gradient: gamma must be resolved");
  }
  const WeightDiagonal w = compute_weight_diagonal(cfg.sampling);
  std::vector<ItemGrad> items(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { items[i] = jfb_item(batch[i], p, cfg, g, w); });

  JfbBatchResult res;
  res.grads = DenoiserGrads::zeros_like(p);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const ItemGrad& it : items) {  // fixed order: deterministic reduction
    res.grads.accumulate(it.grads, inv);
    res.mean_loss += it.loss * inv;
    res.mean_fp_iters += it.fp_iters * inv;
    res.finite = res.finite && it.finite;
  }
  if (!res.finite) {
    res.grads = DenoiserGrads::zeros_like(p);  // aborted step, reported via the flag
  }
  return res;
}

AdamState AdamState::zeros_like(const DenoiserParams& p) {
  AdamState s;
  for (const auto& L : p.layers) {
    s.m_kernel.emplace_back(L.kernel.size(), 0.0);
    s.v_kernel.emplace_back(L.kernel.size(), 0.0);
    s.m_bias.emplace_back(L.bias.size(), 0.0);
    s.v_bias.emplace_back(L.bias.size(), 0.0);
  }
  return s;
}

namespace {

void adam_update(std::vector<double>& param, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& grad, double lr, double b1, double b2, double eps,
                 double bc1, double bc2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

void adam_step(AdamState& state, DenoiserParams& p, const DenoiserGrads& grads, double lr,
               double beta1, double beta2, double eps) {
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step_count));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    adam_update(p.layers[l].kernel, state.m_kernel[l], state.v_kernel[l], grads.kernel[l], lr,
                beta1, beta2, eps, bc1, bc2);
    adam_update(p.layers[l].bias, state.m_bias[l], state.v_bias[l], grads.bias[l], lr, beta1,
                beta2, eps, bc1, bc2);
  }
}

namespace {

struct ValMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
};

ValMetrics validate_epoch(const std::vector<ValidationItem>& val, const AngleMask& val_mask,
                          const DenoiserParams& p, const DEQConfig& deq, const Geometry& g) {
  std::vector<ValMetrics> per_item(val.size());
  parallel_for(val.size(), [&](std::size_t i) {
    FixedPointResult fp = fixed_point_solve(val[i].y, val_mask, p, deq, g);
    per_item[i].psnr = psnr(fp.x_bar, val[i].ground_truth, val[i].data_range);
    per_item[i].ssim = ssim(fp.x_bar, val[i].ground_truth, val[i].data_range);
  });
  ValMetrics mean;
  for (const auto& m : per_item) {
    mean.psnr += m.psnr / static_cast<double>(val.size());
    mean.ssim += m.ssim / static_cast<double>(val.size());
  }
  return mean;
}

constexpr std::uint64_t kShuffleTag = 1;
constexpr std::uint64_t kPairTag = 2;
constexpr std::uint64_t kValNoiseTag = 3;

}  // namespace

std::vector<ValidationItem> build_validation_set(const std::vector<Image>& val_images,
                                                 const AngleMask& val_mask,
                                                 const NoiseConfig& noise, const Geometry& g) {
  std::vector<ValidationItem> val(val_images.size());
  for (std::size_t i = 0; i < val_images.size(); ++i) {
    ValidationItem& item = val[i];
    item.ground_truth = val_images[i];
    Sinogram full = radon_forward(item.ground_truth, g);
    double peak = 0.0;
    for (double v : full.data) peak = std::max(peak, std::abs(v));
    const double sigma = noise.relative_level * peak;
    item.y = apply_mask(full, val_mask);
    if (sigma > 0.0) {
      RngStream nrng = RngStream(noise.seed).fork(kValNoiseTag, static_cast<std::uint64_t>(i));
      for (auto& v : item.y.data) v += sigma * nrng.next_gaussian();
    }
    for (double v : item.ground_truth.data) item.data_range = std::max(item.data_range, v);
  }
  return val;
}

TrainResult train_from(const std::vector<Image>& dataset, const TrainConfig& cfg,
                       const Geometry& g, DenoiserParams params, AdamState adam,
                       int first_epoch) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.val_count < 0 || cfg.val_count >= static_cast<int>(dataset.size())) {
    throw std::invalid_argument("train: val_count must leave at least one training image");
  }
  TrainConfig resolved = cfg;
  resolved.deq = resolve_gamma(cfg.deq, g);
  if (adam.m_kernel.empty()) adam = AdamState::zeros_like(params);

  const int n_train = static_cast<int>(dataset.size()) - cfg.val_count;
  RngStream root(cfg.seed);

  // Fixed validation protocol: equispaced mask, one frozen noise draw per item.
  const int val_s = cfg.val_s > 0 ? cfg.val_s : cfg.sampling.s;
  const AngleMask val_mask = equispaced_mask(val_s, g.n_angles_total);
  const std::vector<Image> val_images(dataset.begin() + n_train, dataset.end());
  std::vector<ValidationItem> val = build_validation_set(val_images, val_mask, cfg.noise, g);

  TrainResult out;
  std::vector<int> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);

  DenoiserParams avg_params = params;  // Polyak running average (optional)
  long avg_count = 0;

  for (int epoch = first_epoch; epoch < first_epoch + cfg.n_epochs; ++epoch) {
    RngStream erng = root.fork(kShuffleTag, static_cast<std::uint64_t>(epoch));
    erng.shuffle(order);

    double epoch_loss = 0.0;
    double epoch_fp = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n_train - start);
      std::vector<MeasurementPair> batch(static_cast<std::size_t>(count));
      std::vector<RngStream> streams;
      streams.reserve(static_cast<std::size_t>(count));
      for (int b = 0; b < count; ++b) {
        streams.push_back(root.fork(kPairTag, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(start + b)));
      }
      parallel_for(static_cast<std::size_t>(count), [&](std::size_t b) {
        const Image& img = dataset[static_cast<std::size_t>(order[static_cast<std::size_t>(start) + b])];
        batch[b] = make_training_pair(img, g, cfg.sampling, cfg.noise, streams[b]);
        batch[b].ground_truth = img;
      });
      JfbBatchResult jfb = jfb_gradient(batch, params, resolved, g);
      if (!jfb.finite) {
        throw NumericalError("train: non-finite gradient, aborting step");
      }
      adam_step(adam, params, jfb.grads, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      spectral_normalize(params, params.spec.sn_power_iters);
      if (cfg.optimizer == OptimizerKind::kAdamPolyak) {
        ++avg_count;
        const double w_new = 1.0 / static_cast<double>(avg_count);
        for (std::size_t l = 0; l < params.layers.size(); ++l) {
          for (std::size_t i = 0; i < params.layers[l].kernel.size(); ++i) {
            avg_params.layers[l].kernel[i] +=
                w_new * (params.layers[l].kernel[i] - avg_params.layers[l].kernel[i]);
          }
          for (std::size_t i = 0; i < params.layers[l].bias.size(); ++i) {
            avg_params.layers[l].bias[i] +=
                w_new * (params.layers[l].bias[i] - avg_params.layers[l].bias[i]);
          }
        }
      }
      epoch_loss += jfb.mean_loss;
      epoch_fp += jfb.mean_fp_iters;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss_kind = cfg.loss_kind;
    rec.train_loss = epoch_loss / std::max(1, n_batches);
    rec.mean_fp_iters = epoch_fp / std::max(1, n_batches);
    if (!val.empty()) {
      const DenoiserParams& eval_params =
          cfg.optimizer == OptimizerKind::kAdamPolyak ? avg_params : params;
      const ValMetrics m = validate_epoch(val, val_mask, eval_params, resolved.deq, g);
      rec.val_psnr = m.psnr;
      rec.val_ssim = m.ssim;
    }
    out.history.push_back(rec);
  }

  out.params = cfg.optimizer == OptimizerKind::kAdamPolyak && avg_count > 0 ? avg_params : params;
  return out;
}

TrainResult train(const std::vector<Image>& dataset, const TrainConfig& cfg, const Geometry& g,
                  const DenoiserSpec& spec) {
  DenoiserParams params = init_denoiser(spec, cfg.seed);
  spectral_normalize(params, std::max(10, spec.sn_power_iters));
  return train_from(dataset, cfg, g, std::move(params), AdamState{}, 0);
}

std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::kSelfWeighted: return "self";
    case LossKind::kSupOperator: return "sup-operator";
    case LossKind::kSupPlain: return "sup-plain";
  }
  return "unknown";
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  CsvWriter csv({"epoch", "loss_kind", "train_loss", "val_psnr", "val_ssim", "mean_fp_iters"});
  for (const auto& r : history) {
    csv.add_row({std::to_string(r.epoch), loss_kind_name(r.loss_kind),
                 format_double(r.train_loss), format_double(r.val_psnr),
                 format_double(r.val_ssim), format_double(r.mean_fp_iters)});
  }
  csv.write(path);
}

}  // namespace tsdq
