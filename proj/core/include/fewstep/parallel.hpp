#pragma once

#include <cstddef>
#include <functional>

namespace fewstep {

inline constexpr const char* kWorkersEnv = "FEWSTEP_WORKERS";

// Worker count from FEWSTEP_WORKERS, else the hardware concurrency (>= 1).
int worker_count();

// Runs fn(0) ... fn(n - 1) on up to `workers` threads (0 = worker_count()).
// Indices are claimed in order; the first exception thrown is rethrown after
// all workers have stopped.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int workers = 0);

}  // namespace fewstep
