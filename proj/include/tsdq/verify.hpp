#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsdq/denoiser.hpp"
#include "tsdq/sampling.hpp"
#include "tsdq/training.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

enum class VerifyMode { kExact, kMonteCarlo };

struct VerificationReport {
  std::string claim_id;  ///< prop1 | thm1 | prop2 | gradcheck
  VerifyMode mode = VerifyMode::kExact;
  std::int64_t n_draws = 0;
  double max_abs_error = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string details;
};

std::string report_line(const VerificationReport& r);
void write_reports_csv(const std::vector<VerificationReport>& reports, const std::string& path);
void write_reports_text(const std::vector<VerificationReport>& reports, const std::string& path);

/// Dense materialization of the masked Radon matrix (column by column from
/// the matrix-free operator). Confined to verification; row-major, size
/// (|mask| * n_detectors) x n_pixels^2.
std::vector<double> materialize_dense(const AngleMask& mask, const Geometry& g, int* rows,
                                      int* cols);

/// Numerical rank diagnostics of the materialized full operator.
struct RankReport {
  int rank = 0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  bool flagged = false;  ///< smallest singular value below 1e-8 * sigma_max
};

RankReport operator_rank_report(const Geometry& g);

/// Checks E[(M'A)^T W M'A] = A^T A by exhaustive subset enumeration (exact
/// mode, C(n, s) <= 1e5, image side <= 12) or Monte Carlo averaging.
VerificationReport verify_prop1(const Geometry& g, const MaskDistribution& dist, VerifyMode mode,
                                std::int64_t n_draws = 10000, std::uint64_t seed = 0);

/// Checks diag(E[M^T M]) = (s / n) by enumeration or Monte Carlo.
VerificationReport verify_prop2(const MaskDistribution& dist, VerifyMode mode,
                                std::int64_t n_draws = 1000000, std::uint64_t seed = 0);

struct Thm1Options {
  DEQConfig deq;
  double noise_sigma = 0.0;          ///< Monte Carlo mode only
  std::vector<std::int64_t> mc_schedule = {100, 1000, 10000};
};

/// Zero-noise exact mode: fixes (x, M) per item, enumerates every mask M'
/// and compares the averaged self-supervised JFB parameter gradient with
/// the operator-weighted supervised one. Monte Carlo mode draws (M', e')
/// and reports the log-log decay slope of the gradient gap.
VerificationReport verify_thm1(const Geometry& g, const MaskDistribution& dist,
                               const DenoiserParams& p, const std::vector<Image>& x_set,
                               VerifyMode mode, const Thm1Options& opts);

/// Per-draw gradient gaps of the Monte Carlo theorem check (for slope
/// reporting): returns ||mean_n self-grads - sup-grads|| for each n in the
/// schedule.
std::vector<double> thm1_mc_gaps(const Geometry& g, const MaskDistribution& dist,
                                 const DenoiserParams& p, const Image& x,
                                 const Thm1Options& opts, std::uint64_t seed);

/// Runs every registered finite-difference / dense-matrix oracle.
/// corrupt_layer >= 0 negates that layer's kernel gradient inside the
/// denoiser VJP check, which must then fail naming the layer.
std::vector<VerificationReport> gradcheck_all(std::uint64_t seed, int corrupt_layer = -1);

}  // namespace tsdq
