#include "pixelstack/optim.hpp"

#include <cmath>
#include <utility>

#include "pixelstack/error.hpp"

namespace pixelstack {

void Parameter::enable_polyak(double decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw ValueError("polyak decay must lie in [0, 1)");
  polyak_decay = decay;
  const auto v = value.data();
  polyak_shadow.assign(v.begin(), v.end());
}

void zero_grad(std::span<Parameter* const> params) {
  for (auto* p : params) p->value.zero_grad();
}

void swap_polyak(std::span<Parameter* const> params) {
  for (auto* p : params) {
    if (!p->polyak_enabled()) continue;
    auto v = p->value.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) std::swap(v[i], p->polyak_shadow[i]);
  }
}

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ValueError("Adam learning rate must be positive");
}

void Adam::step(std::span<Parameter* const> params) {
  ++steps_;
  for (auto* p : params) {
    if (!p->value.has_grad()) continue;
    auto& st = state_[p->value.id()];
    auto value = p->value.mutable_data();
    const auto grad = p->value.grad();
    if (st.m.empty()) {
      st.m.assign(value.size(), 0.0);
      st.v.assign(value.size(), 0.0);
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      st.m[i] = config_.beta1 * st.m[i] + (1.0 - config_.beta1) * g;
      st.v[i] = config_.beta2 * st.v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      value[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
    if (p->polyak_enabled()) {
      const double d = p->polyak_decay;
      for (std::size_t i = 0; i < value.size(); ++i) {
        p->polyak_shadow[i] = d * p->polyak_shadow[i] + (1.0 - d) * value[i];
      }
    }
  }
}

}  // namespace pixelstack
