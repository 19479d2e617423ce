#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace pixelstack {

/// One line of a training log.
struct MetricRow {
  std::size_t step = 0;
  double wall_seconds = 0.0;
  std::vector<std::pair<std::string, double>> values;

  [[nodiscard]] double get(const std::string& name) const {
    for (const auto& [k, v] : values)
      if (k == name) return v;
    return 0.0;
  }
};

using MetricSink = std::function<void(const MetricRow&)>;

}  // namespace pixelstack
