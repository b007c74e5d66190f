#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace kenn {

// Default worker count: KENN_WORKERS env var, else hardware concurrency.
inline int default_workers() {
    if (const char* env = std::getenv("KENN_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs fn(i) for i in [0, n) on `workers` threads. Work items are pure
// functions of their index, so results are deterministic regardless of
// scheduling; the first exception (by index) is rethrown on the caller.
inline void parallel_for(int64_t n, int workers, const std::function<void(int64_t)>& fn) {
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::atomic<int64_t> first_error_index{n};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    auto run = [&] {
        for (;;) {
            const int64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<size_t>(i)] = std::current_exception();
                int64_t prev = first_error_index.load();
                while (i < prev && !first_error_index.compare_exchange_weak(prev, i)) {
                }
            }
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = static_cast<int>(std::min<int64_t>(workers, n));
    pool.reserve(static_cast<size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
    const int64_t bad = first_error_index.load();
    if (bad < n) std::rethrow_exception(errors[static_cast<size_t>(bad)]);
}

}  // namespace kenn
