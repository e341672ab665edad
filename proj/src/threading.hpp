#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace taton {

// Worker pool size: hardware concurrency, capped by the TATON_THREADS
// environment variable when set to a positive integer.
inline int worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    int n = hw > 0 ? static_cast<int>(hw) : 1;
    if (const char* env = std::getenv("TATON_THREADS")) {
        char* end = nullptr;
        long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0 && cap < n) n = static_cast<int>(cap);
    }
    return n;
}

// Runs fn(i) for every i in [0, n) across the worker pool. Work is pulled
// from a shared atomic counter; callers that write results into slot i of a
// pre-sized vector get deterministic output regardless of scheduling. The
// first exception thrown by any worker is rethrown after all workers finish.
inline void parallel_for(long n, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    int workers = worker_count();
    if (workers <= 1 || n == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    if (workers > n) workers = static_cast<int>(n);
    std::atomic<long> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            long i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace taton
