#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace spikesign {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads, strided. Callers write
/// results into per-index slots so the outcome does not depend on `jobs`.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn)
{
    const auto j = static_cast<std::size_t>(std::max(1, jobs));
    if (j == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t stride = std::min(j, n);
    std::vector<std::exception_ptr> errors(stride);
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < stride; ++w)
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += stride) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace spikesign
