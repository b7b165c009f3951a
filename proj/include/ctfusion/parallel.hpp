// Deterministic parallel loops. Work is split into chunks whose boundaries
// depend only on the problem size, and reductions combine per-chunk partials
// in chunk order, so results are bit-identical for any thread count.
#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ctfusion::par {

inline int& thread_count_ref() {
    static int count = [] {
        if (const char* env = std::getenv("CT_SPADES_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? int(hw) : 1;
    }();
    return count;
}

inline int thread_count() { return thread_count_ref(); }
inline void set_thread_count(int n) { thread_count_ref() = n < 1 ? 1 : n; }

inline int64_t chunk_size_for(int64_t n) {
    // Depends on n only, never on the thread count.
    int64_t c = (n + 63) / 64;
    return c < 1 ? 1 : c;
}

/// Runs fn(lo, hi) over disjoint chunks covering [0, n). fn must only write
/// to locations owned by its index range.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int64_t chunk = chunk_size_for(n);
    const int64_t n_chunks = (n + chunk - 1) / chunk;
    const int workers = std::min<int64_t>(thread_count(), n_chunks);
    if (workers <= 1) {
        for (int64_t c = 0; c < n_chunks; ++c)
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<int64_t> next{0};
    auto work = [&] {
        for (;;) {
            int64_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= n_chunks) return;
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int t = 0; t < workers - 1; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

/// Deterministic reduction: per-chunk partials are combined in chunk order.
template <class T, class ChunkFn, class CombineFn>
T parallel_reduce(int64_t n, T init, ChunkFn chunk_fn, CombineFn combine) {
    if (n <= 0) return init;
    const int64_t chunk = chunk_size_for(n);
    const int64_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<T> partials(size_t(n_chunks), init);
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        int64_t c = lo / chunk;
        partials[size_t(c)] = chunk_fn(lo, hi, partials[size_t(c)]);
    });
    T acc = init;
    for (auto& p : partials) acc = combine(acc, p);
    return acc;
}

}  // namespace ctfusion::par
