#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace aquacal {

// Runs fn(i) for i in [0, n). Work items must be independent and must write
// only to their own slot; results are then identical for any thread count,
// which is what keeps archives byte-stable under --threads.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t w = 0; w < t; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += t) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace aquacal
