#pragma once
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace mtfl {

// Worker cap: MTFL_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Iterations must write only to their own
// slots; the split never influences results. Nested calls run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Fixed-order pairwise reduction: ((p0+p1)+(p2+p3))+... independent of how
// the parts were produced.
template <class T>
T tree_reduce(std::vector<T> parts) {
    if (parts.empty()) return T{};
    std::size_t n = parts.size();
    while (n > 1) {
        const std::size_t half = (n + 1) / 2;
        for (std::size_t i = 0; i + half < n; ++i) parts[i] = parts[2 * i] + parts[2 * i + 1];
        if (n % 2 == 1) parts[half - 1] = std::move(parts[n - 1]);
        n = half;
    }
    return std::move(parts[0]);
}

}  // namespace mtfl
