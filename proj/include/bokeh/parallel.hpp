#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace bokeh {

// Runs fn(row_begin, row_end) over [0, rows) partitioned into contiguous
// bands, one per worker. Every output row is owned by exactly one worker, so
// no synchronization beyond the final join is needed. threads <= 1 runs
// inline.
template <typename F>
void parallel_rows(int rows, int threads, F&& fn) {
    if (threads <= 1 || rows <= 1) {
        fn(0, rows);
        return;
    }
    int workers = std::min(threads, rows);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    int chunk = (rows + workers - 1) / workers;
    for (int w = 1; w < workers; ++w) {
        int begin = w * chunk;
        int end = std::min(rows, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min(rows, chunk));
    for (auto& t : pool) t.join();
}

} // namespace bokeh
