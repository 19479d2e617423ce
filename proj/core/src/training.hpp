#pragma once

// Small helpers shared by the training loops.

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "pixelstack/error.hpp"
#include "pixelstack/metrics.hpp"
#include "pixelstack/rng.hpp"

namespace pixelstack::detail {

/// Minibatches drawn from a fresh Fisher-Yates permutation every epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, Rng rng) : n_(n), batch_(batch), rng_(rng), order_(n) {
    if (n == 0) throw ValueError("cannot train on an empty dataset");
    if (batch == 0) throw ConfigError("batch size must be positive");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    cursor_ = n_;
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    while (out.size() < std::min(batch_, n_)) {
      if (cursor_ == n_) shuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (std::size_t i = n_; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_.below(i));
      std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
  }

  std::size_t n_, batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

class StepClock {
 public:
  StepClock() : start_(std::chrono::steady_clock::now()) {}
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Runs one training step and turns numeric failures into DivergenceError.
template <class F>
auto guarded(const char* what, std::size_t step, F&& f) {
  try {
    auto loss = f();
    if (!std::isfinite(loss)) {
      throw DivergenceError(std::string(what) + ": non-finite loss at step " + std::to_string(step));
    }
    return loss;
  } catch (const NumericError& e) {
    throw DivergenceError(std::string(what) + ": diverged at step " + std::to_string(step) + " (" + e.what() + ")");
  }
}

inline void emit(const MetricSink& sink, std::size_t step, std::size_t every, std::size_t last, const StepClock& clock,
                 std::vector<std::pair<std::string, double>> values) {
  if (!sink) return;
  if (every == 0 || (step % every != 0 && step != last)) return;
  sink(MetricRow{step, clock.seconds(), std::move(values)});
}

}  // namespace pixelstack::detail
