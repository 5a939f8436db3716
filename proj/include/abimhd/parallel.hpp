#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace abimhd {

// ABIMHD_THREADS=0 or unset means hardware concurrency.
inline unsigned thread_count()
{
    static const unsigned cached = [] {
        unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        const char* env = std::getenv("ABIMHD_THREADS");
        if (!env || !*env) return hw;
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end == env || v < 0) return hw;
        return v == 0 ? hw : static_cast<unsigned>(v);
    }();
    return cached;
}

// Static contiguous partition of [0, count). Each index is visited exactly
// once and the partition depends only on count and the thread count, so
// per-index results are reproducible. Reductions are left to the caller.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t min_chunk = 256)
{
    unsigned workers = thread_count();
    if (workers <= 1 || count < 2 * min_chunk) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count / min_chunk));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::size_t chunk = (count + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace abimhd
