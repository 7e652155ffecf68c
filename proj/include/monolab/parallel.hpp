#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace monolab {

/// Run fn(i) for i in [0, n) on up to `jobs` workers. Results must be
/// written to preassigned slots by index so the output does not depend
/// on scheduling. First exception wins and is rethrown on the caller.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr eptr = nullptr;
    std::vector<std::thread> pool;
    unsigned nw = std::min<std::size_t>(jobs, n);
    std::mutex emu;
    for (unsigned w = 0; w < nw; ++w) {
        pool.emplace_back([&] {
            while (!failed.load(std::memory_order_relaxed)) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(emu);
                    if (!eptr) eptr = std::current_exception();
                    failed.store(true);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (eptr) std::rethrow_exception(eptr);
}

} // namespace monolab
