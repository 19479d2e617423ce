#pragma once

#include <cstddef>
#include <functional>

namespace pixelstack {

/// Worker cap: PIXELSTACK_THREADS if set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
[[nodiscard]] std::size_t worker_count();

/// Calls body(i) for i in [0, count) on up to worker_count() threads.
/// Iterations must be independent; the first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace pixelstack
