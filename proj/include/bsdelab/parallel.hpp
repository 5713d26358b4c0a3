#pragma once

#include <cstddef>
#include <functional>

namespace bsdelab {

// Worker count from BSDELAB_WORKERS, else hardware concurrency.
int worker_count();

// Runs body(begin, end) over contiguous chunks of [0, n). Callers write into
// per-index slots, so results do not depend on the number of workers.
void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t, std::ptrdiff_t)>& body);

}  // namespace bsdelab
