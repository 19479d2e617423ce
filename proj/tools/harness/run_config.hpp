#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pixelstack/hierarchy.hpp"

namespace pixelstack::harness {

/// Sectioned key=value run configuration.
///
///   [global]   seed, steps, lr, batch, log_every, pixel_bits
///   [level.N]  encoder / aux / decoder keys for level N (N = 1, 2, ...)
///   [prior]    layers, hidden, kernel, classes, steps, lr, batch
///   [sampler]  temperature, mode
///   [sweep]    prior_layers, prior_hidden, prior_steps, prior_lr, prior_batch, repeats
///
/// '#' and ';' start comments. Unknown sections or keys are errors, and so
/// are values that do not parse as the key's type. Keys left out inherit
/// their default (per-level steps, lr and batch default to [global]).
class RunConfig {
 public:
  RunConfig();

  [[nodiscard]] static RunConfig parse(const std::string& text);
  [[nodiscard]] static RunConfig load(const std::filesystem::path& path);

  /// Every key of every section with its resolved value; parsing it back
  /// yields an identical configuration.
  [[nodiscard]] std::string to_text() const;

  /// Validates and stores one value; `section` is e.g. "global" or "level.2".
  void set(const std::string& section, const std::string& key, const std::string& value);
  [[nodiscard]] std::string get(const std::string& section, const std::string& key) const;

  [[nodiscard]] std::size_t level_count() const noexcept { return levels_; }
  /// Keeps the first `n` level sections (adds default ones if n is larger).
  void set_level_count(std::size_t n);

  [[nodiscard]] std::uint64_t seed() const;
  [[nodiscard]] unsigned pixel_bits() const;

  /// Level specs resolved against the pixel geometry, with per-component seeds.
  [[nodiscard]] std::vector<LevelSpec> level_specs(const MapGeometry& pixels) const;
  [[nodiscard]] PriorSpec prior_spec(const MapGeometry& pixels) const;
  [[nodiscard]] SamplerConfig sampler() const;
  /// Level 1 spec plus the fixed sweep prior.
  [[nodiscard]] PredictabilitySpec sweep_spec(const MapGeometry& pixels) const;

 private:
  [[nodiscard]] std::string resolved(const std::string& section, const std::string& key) const;
  [[nodiscard]] std::size_t get_size(const std::string& section, const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& section, const std::string& key) const;
  [[nodiscard]] TrainOptions train_options(const std::string& section, const std::string& steps_key,
                                           const std::string& prefix, std::uint64_t seed) const;

  std::map<std::string, std::map<std::string, std::string>> values_;  // explicit values only
  std::size_t levels_ = 0;
};

}  // namespace pixelstack::harness
