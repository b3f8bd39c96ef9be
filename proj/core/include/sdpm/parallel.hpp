#pragma once

#include <cstddef>
#include <functional>

namespace sdpm {

// Worker count: SDPM_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_threads();

// Runs fn(0..n-1) over up to `threads` workers. Each index is handled exactly
// once; callers write results into per-index slots so output does not depend
// on scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace sdpm
