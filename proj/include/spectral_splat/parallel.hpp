#pragma once

// Minimal index-parallel helper. Callers merge any shared results in index
// order themselves, which keeps every pipeline bit-identical for any thread
// count.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace sgs {

// Thread-count resolution order: explicit request, SPECTRAL_SPLAT_THREADS,
// hardware concurrency.
inline int resolve_thread_count(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SPECTRAL_SPLAT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

template <typename Fn>
inline void parallel_for(int n, int threads, Fn&& fn) {
    if (n <= 0) return;
    if (threads <= 0) threads = resolve_thread_count();
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    if (failed.load(std::memory_order_relaxed)) return;
                    fn(i);
                }
            } catch (...) {
                if (!failed.exchange(true)) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace sgs
