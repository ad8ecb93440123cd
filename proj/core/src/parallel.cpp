#include "pointslice/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace ps {

namespace {
std::atomic<int> g_workers{1};
}

void set_workers(int n) { g_workers.store(n < 1 ? 1 : n); }

int workers() noexcept { return g_workers.load(); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk_fn) {
    if (n <= 0) return;
    const int w = std::min<std::int64_t>(workers(), n);
    if (w <= 1) {
        chunk_fn(0, n);
        return;
    }
    const std::int64_t chunk = (n + w - 1) / w;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(w));
    for (int t = 0; t < w; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min<std::int64_t>(lo + chunk, n);
        if (lo >= hi) break;
        threads.emplace_back([&chunk_fn, lo, hi] { chunk_fn(lo, hi); });
    }
    for (auto& th : threads) th.join();
}

} // namespace ps
