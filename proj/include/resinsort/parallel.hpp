#pragma once

#include <cstddef>
#include <functional>

namespace resinsort {

/// Worker cap: RESINSORT_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(0) ... fn(n - 1) across up to worker_count() threads. Each index
/// runs exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The exception from the lowest
/// failing index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace resinsort
