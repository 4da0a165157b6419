#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsdq/rng.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

/// Ordered subset of angle indices; selecting an angle selects its whole
/// detector row block.
struct AngleMask {
  std::vector<int> indices;  ///< strictly increasing, each in [0, n_angles_total)
  int n_angles_total = 0;

  int count() const { return static_cast<int>(indices.size()); }
  void validate() const;
  bool contains(int angle) const;
  std::string to_csv_field() const;  ///< comma-separated indices
};

AngleMask mask_from_csv_field(const std::string& field, int n_angles_total);
AngleMask full_mask(int n_angles_total);
/// Deterministic equispaced subset: indices floor(j * n_total / s).
AngleMask equispaced_mask(int s, int n_angles_total);

enum class MaskKind { kUniformSubset, kEquispacedFixed, kComplementarySplit };

struct MaskDistribution {
  MaskKind kind = MaskKind::kUniformSubset;
  int s = 1;        ///< subset size (for ComplementarySplit: total size, even)
  int n_angles_total = 0;

  void validate() const;
};

/// Per-row weights w_k >= 0 of the diagonal weighting matrix; constant
/// within an angle block, stored per angle.
struct WeightDiagonal {
  std::vector<double> per_angle;  ///< length n_angles_total
  int n_angles_total = 0;

  double for_angle(int angle) const { return per_angle[static_cast<std::size_t>(angle)]; }
  /// Expansion to one weight per measurement row.
  std::vector<double> per_row(int n_detectors) const;
};

AngleMask sample_mask(const MaskDistribution& dist, RngStream& rng);

/// Draws an s-subset uniformly and splits it uniformly at random into two
/// disjoint halves.
std::pair<AngleMask, AngleMask> split_complementary(const MaskDistribution& dist, RngStream& rng);

enum class GramMode { kExact, kMonteCarlo };

/// Per-angle selection probabilities diag(E[M^T M]) at angle granularity.
/// Exact mode enumerates all subsets and requires C(n, s) <= 10^6.
std::vector<double> expected_mask_gram(const MaskDistribution& dist, GramMode mode,
                                       std::int64_t n_draws = 0, std::uint64_t seed = 0);

/// Weight diagonal of the self-supervised loss: inverse square root of the
/// expected per-row selection frequency, zero where that frequency is zero.
WeightDiagonal compute_weight_diagonal(const MaskDistribution& dist);

/// Sum over selected rows of (w_row * z_row)^2 for a masked sinogram z.
double weighted_residual_norm_sq(const Sinogram& z, const AngleMask& mask,
                                 const WeightDiagonal& w);

/// Number of s-subsets of an n-set; saturates at int64 max.
std::int64_t binomial_coefficient(int n, int s);

}  // namespace tsdq
