#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace nutrans {

/// Runs body(g) for g in [0, n) on up to `threads` workers; rethrows the first failure.
template <class Body>
void parallel_for(int n, int threads, Body&& body) {
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int g = 0; g < n; ++g) {
            body(g);
        }
        return;
    }
    std::exception_ptr error;
    std::mutex mtx;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int g = w; g < n; g += workers) {
                try {
                    body(g);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mtx);
                    if (!error) {
                        error = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace nutrans
