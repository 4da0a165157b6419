#pragma once

#include <cstdint>

#include "tsdq/types.hpp"

namespace tsdq {

enum class PhantomKind { kSheppLogan, kRandomEllipses };

struct PhantomSpec {
  PhantomKind kind = PhantomKind::kSheppLogan;
  int side = 32;
  std::uint64_t seed = 0;
  int n_min = 2;  ///< random-ellipses: ellipse count range
  int n_max = 6;

  void validate() const;
};

/// Deterministic synthetic phantom with values clipped to [0, 1].
/// Pixels are classified by their center point, so outputs are piecewise
/// constant.
Image generate_phantom(const PhantomSpec& spec);

}  // namespace tsdq
