#pragma once

#include <cstddef>
#include <functional>

namespace infocon {

// Worker count: INFOCON_THREADS if set and positive, else hardware concurrency.
int worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
// processed exactly once; results must be written to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace infocon
