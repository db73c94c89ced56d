#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace linemap {

// Runs f(i) for i in [0, n) on up to `threads` workers with static contiguous
// chunks. Callers write results by index, so output is independent of the
// thread count. The first exception thrown by any worker is rethrown.
template <typename F>
void parallel_for(size_t n, int threads, F&& f) {
    const size_t workers = std::min<size_t>(std::max(1, threads), n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        const size_t begin = n * w / workers, end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                for (size_t i = begin; i < end; ++i)
                    f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mutex);
                if (!error)
                    error = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (error)
        std::rethrow_exception(error);
}

}  // namespace linemap
