#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tsdq {

/// Deterministic random stream with value semantics. Streams are split by
/// hashing the parent key with a tag, so per-item child streams can be
/// derived up front and consumed concurrently without shared state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Child stream independent of this stream's draw position. Equal tags
  /// give equal children; callers hand out distinct tags.
  RngStream fork(std::uint64_t tag) const;
  RngStream fork(std::uint64_t a, std::uint64_t b) const;
  RngStream fork(std::uint64_t a, std::uint64_t b, std::uint64_t c) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53-bit resolution.
  double next_double();
  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double next_gaussian();
  /// Unbiased uniform integer in [0, n), n >= 1.
  std::uint64_t next_below(std::uint64_t n);

  /// Fisher-Yates shuffle (uses this stream's draws).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::mt19937_64 gen_;
};

}  // namespace tsdq
