#include "tsdq/rng.hpp"

#include <cmath>
#include <numbers>

namespace tsdq {

namespace {

// SplitMix64 finalizer; used both to seed the engine and to derive child
// stream keys.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t combine(std::uint64_t key, std::uint64_t tag) {
  return mix(key ^ mix(tag + 0x632be59bd9b4e019ULL));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(seed), gen_(mix(seed)) {}

RngStream RngStream::fork(std::uint64_t tag) const { return RngStream(combine(key_, tag)); }

RngStream RngStream::fork(std::uint64_t a, std::uint64_t b) const {
  return RngStream(combine(combine(key_, a), b));
}

RngStream RngStream::fork(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  return RngStream(combine(combine(combine(key_, a), b), c));
}

std::uint64_t RngStream::next_u64() { return gen_(); }

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  // Box-Muller without pair caching so copies of a stream replay
  // identically. u1 is kept away from zero for the log.
  double u1 = 0.0;
  do {
    u1 = next_double();
  } while (u1 <= 0.0);
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::next_below(std::uint64_t n) {
  // Rejection sampling on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

}  // namespace tsdq
