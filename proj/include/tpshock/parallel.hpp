#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tpshock {

// Worker count used for column sweeps and sigma-sample loops. 0 means
// "unset": fall back to TPSHOCK_THREADS, then hardware_concurrency.
inline int& configured_threads() {
    static int n = 0;
    return n;
}

inline void set_thread_count(int n) { configured_threads() = n; }

inline int effective_threads() {
    int n = configured_threads();
    if (n <= 0) {
        if (const char* env = std::getenv("TPSHOCK_THREADS")) n = std::atoi(env);
    }
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

// Static contiguous chunking: worker w handles [w*n/W, (w+1)*n/W). Each
// iteration writes only its own output slot, so results do not depend on
// scheduling and runs are reproducible for any thread count.
template <class F>
void parallel_for(int n, F&& body) {
    const int workers = std::min(effective_threads(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const int lo = static_cast<int>(static_cast<long>(n) * w / workers);
        const int hi = static_cast<int>(static_cast<long>(n) * (w + 1) / workers);
        pool.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace tpshock
