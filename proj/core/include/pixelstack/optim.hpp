#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pixelstack/tensor.hpp"

namespace pixelstack {

/// Trainable leaf tensor with an optional Polyak (EMA) shadow copy.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> polyak_shadow;  // empty when averaging is disabled
  double polyak_decay = 0.9999;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void enable_polyak(double decay);
  [[nodiscard]] bool polyak_enabled() const noexcept { return !polyak_shadow.empty(); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grad(std::span<Parameter* const> params);

/// Exchanges live values and Polyak shadows of every parameter that has one.
/// Calling it twice restores the original state.
void swap_polyak(std::span<Parameter* const> params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment state is keyed by tensor identity, so a
/// single optimizer can serve parameters collected from several modules.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// Applies one update from the accumulated gradients, then refreshes
  /// Polyak shadows (shadow <- decay*shadow + (1-decay)*value). Parameters
  /// that never received a gradient are left untouched.
  void step(std::span<Parameter* const> params);

  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t steps() const noexcept { return steps_; }

 private:
  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  AdamConfig config_;
  std::unordered_map<const void*, Moments> state_;
  std::size_t steps_ = 0;
};

}  // namespace pixelstack
