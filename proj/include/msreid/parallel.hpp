#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace msreid {

// Worker count from MSREID_THREADS, default 1. Parallel sections only ever
// write disjoint preallocated slots, so results do not depend on the count.
inline int thread_count() {
    const char* env = std::getenv("MSREID_THREADS");
    if (env == nullptr) return 1;
    const long n = std::strtol(env, nullptr, 10);
    if (n < 1) return 1;
    if (n > 64) return 64;
    return static_cast<int>(n);
}

// Runs fn(begin, end) over contiguous chunks of [0, n).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    const int workers = thread_count();
    if (workers <= 1 || n < 64) {
        fn(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        threads.emplace_back(fn, begin, end);
    }
    for (auto& t : threads) t.join();
}

}  // namespace msreid
