#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tsdq/classical.hpp"
#include "tsdq/deq.hpp"
#include "tsdq/phantoms.hpp"
#include "tsdq/sampling.hpp"
#include "tsdq/training.hpp"
#include "tsdq/types.hpp"

namespace tsdq {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text key-value run configuration: "section.key = value" lines,
/// '#' comments, later keys override earlier ones, CLI overrides override
/// the file. Unknown keys are a hard error; every run echoes the fully
/// resolved map next to its outputs.
class RunConfig {
 public:
  RunConfig();  ///< all defaults

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  void set(const std::string& key, const std::string& value);  ///< throws on unknown key
  void apply_overrides(const std::vector<std::string>& key_value_pairs);

  std::string get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Sorted "key = value" dump of the resolved configuration.
  std::string resolved_text() const;
  void write_resolved(const std::string& path) const;

  // Typed views assembled from the raw keys.
  Geometry geometry() const;
  MaskDistribution sampling() const;
  NoiseConfig noise() const;
  DEQConfig deq() const;
  DenoiserSpec denoiser() const;
  TrainConfig train() const;
  TVConfig tv() const;
  PhantomSpec phantom(std::uint64_t seed_offset = 0) const;
  FbpFilter fbp_filter() const;

  std::uint64_t seed() const;
  int workers() const;

  static const std::vector<std::pair<std::string, std::string>>& schema();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tsdq
