#pragma once

#include <algorithm>
#include <chrono>
#include <span>
#include <vector>

#include "bokeh/image.hpp"
#include "bokeh/synthetic.hpp"
#include "bokeh/weights.hpp"

namespace bokeh {

struct BenchResult {
    int width = 0;
    int height = 0;
    int threads = 1;
    std::vector<double> run_seconds; // one entry per iteration
    double median_seconds = 0.0;
};

// Times the full render path (blur stack + depth-driven weights + blend) on
// a generated scene. Scene synthesis happens outside the timed region, as
// does all I/O (there is none here at all).
inline BenchResult run_render_benchmark(int width, int height, int iters, int threads,
                                        std::span<const int> sizes) {
    if (iters < 1)
        fail(ErrorCode::invalid_argument, "bench iterations must be >= 1");
    SceneSpec spec;
    spec.seed = 42;
    spec.width = width;
    spec.height = height;
    spec.regions = 4;
    Scene scene = gen_scene(spec);

    BenchResult res;
    res.width = width;
    res.height = height;
    res.threads = threads;

    volatile float sink = 0.0f; // keep the render from being optimized out
    for (int i = 0; i < iters; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Image out = parametric_render(scene.image, scene.depth, sizes, FocusParams{},
                                      /*hard=*/false, threads);
        const auto t1 = std::chrono::steady_clock::now();
        sink = sink + out.data[out.data.size() / 2];
        res.run_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    (void)sink;

    std::vector<double> sorted = res.run_seconds;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    res.median_seconds =
        n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    return res;
}

} // namespace bokeh
