#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>

namespace hjblab {

/// Caps worker threads for every data-parallel loop. 0 restores the runtime default.
void set_thread_count(int n);

/// Effective number of worker threads.
int thread_count();

/// Reads HJBLAB_THREADS (0 = auto). Returns the effective count.
int configure_threads_from_env();

/**
 * Runs f(i) for i in [0, n) across worker threads with a static schedule.
 *
 * If any call throws, the exception of the lowest failing index is rethrown.
 * Indices below the current lowest failure are always executed, so the
 * reported failure does not depend on the thread count.
 */
template <class F>
void parallel_for(std::size_t n, F&& f) {
    std::atomic<std::size_t> first_fail{std::numeric_limits<std::size_t>::max()};
    std::exception_ptr error;
    std::mutex mu;
    const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (long long i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        if (idx > first_fail.load(std::memory_order_relaxed)) continue;
        try {
            f(idx);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (idx < first_fail.load()) {
                first_fail.store(idx);
                error = std::current_exception();
            }
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace hjblab
