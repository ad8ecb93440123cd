#pragma once

#include <cstdint>
#include <functional>

namespace ps {

// Process-wide intra-op worker count. Default 1 (single-threaded); the CLI
// maps --workers / POINTSLICE_WORKERS onto this.
void set_workers(int n);
int workers() noexcept;

// Splits [0, n) into contiguous chunks, one per worker. Each index is
// processed by exactly one worker in ascending order inside its chunk, so
// any per-index output is identical for every worker count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk_fn);

} // namespace ps
