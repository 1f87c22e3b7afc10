#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/image.hpp"
#include "bokeh/parallel.hpp"

namespace bokeh {

// Pre-softmax level scores, one plane per smoothing level (level 0 = sharp).
template <typename T>
struct BasicLogits {
    int width = 0;
    int height = 0;
    int levels = 0;
    std::vector<T> values; // planar, like BasicImage

    BasicLogits() = default;
    BasicLogits(int w, int h, int n, T fill = T(0))
        : width(w), height(h), levels(n),
          values(static_cast<size_t>(w) * h * n, fill) {}

    size_t plane_size() const { return static_cast<size_t>(width) * height; }
    T* plane(int i) { return values.data() + plane_size() * i; }
    const T* plane(int i) const { return values.data() + plane_size() * i; }
    T& at(int i, int y, int x) {
        return values[(static_cast<size_t>(i) * height + y) * width + x];
    }
    T at(int i, int y, int x) const {
        return values[(static_cast<size_t>(i) * height + y) * width + x];
    }
};

// Per-pixel blending planes W_0..W_n: nonnegative, summing to 1 at every
// pixel.
template <typename T>
struct BasicWeightMaps {
    int width = 0;
    int height = 0;
    int levels = 0;
    std::vector<T> values;

    BasicWeightMaps() = default;
    BasicWeightMaps(int w, int h, int n, T fill = T(0))
        : width(w), height(h), levels(n),
          values(static_cast<size_t>(w) * h * n, fill) {}

    size_t plane_size() const { return static_cast<size_t>(width) * height; }
    T* plane(int i) { return values.data() + plane_size() * i; }
    const T* plane(int i) const { return values.data() + plane_size() * i; }
    T& at(int i, int y, int x) {
        return values[(static_cast<size_t>(i) * height + y) * width + x];
    }
    T at(int i, int y, int x) const {
        return values[(static_cast<size_t>(i) * height + y) * width + x];
    }
};

using Logits = BasicLogits<float>;
using WeightMaps = BasicWeightMaps<float>;

// Softmax across the level channels independently at each pixel, with
// max-subtraction so logits of magnitude 1e4 stay finite.
template <typename T>
BasicWeightMaps<T> spatial_softmax(const BasicLogits<T>& logits, int threads = 1) {
    for (T v : logits.values)
        if (!std::isfinite(static_cast<double>(v)))
            fail(ErrorCode::non_finite, "spatial_softmax: non-finite logit");

    BasicWeightMaps<T> w(logits.width, logits.height, logits.levels);
    const size_t plane = logits.plane_size();
    const int levels = logits.levels;
    parallel_rows(logits.height, threads, [&](int y0, int y1) {
        std::vector<double> e(levels);
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < logits.width; ++x) {
                size_t p = static_cast<size_t>(y) * logits.width + x;
                double m = logits.values[p];
                for (int i = 1; i < levels; ++i)
                    m = std::max(m, static_cast<double>(logits.values[plane * i + p]));
                double sum = 0.0;
                for (int i = 0; i < levels; ++i) {
                    e[i] = std::exp(static_cast<double>(logits.values[plane * i + p]) - m);
                    sum += e[i];
                }
                for (int i = 0; i < levels; ++i)
                    w.values[plane * i + p] = static_cast<T>(e[i] / sum);
            }
        }
    });
    return w;
}

namespace detail {

template <typename T>
void check_blend_shapes(const BasicImage<T>& original,
                        std::span<const BasicImage<T>> smoothed,
                        const BasicWeightMaps<T>& weights) {
    if (weights.levels != static_cast<int>(smoothed.size()) + 1)
        fail(ErrorCode::shape_mismatch,
             "blend: weights have " + std::to_string(weights.levels) + " levels, expected " +
                 std::to_string(smoothed.size() + 1));
    if (weights.width != original.width || weights.height != original.height)
        fail(ErrorCode::shape_mismatch, "blend: weight dims do not match image");
    for (const auto& s : smoothed)
        if (!s.same_shape(original))
            fail(ErrorCode::shape_mismatch, "blend: smoothed image dims do not match original");
}

} // namespace detail

// Per-pixel convex combination of the original and the smoothed images:
// out = W_0*original + sum_i W_i*smoothed[i-1], weight planes broadcast
// across color channels.
template <typename T>
BasicImage<T> blend(const BasicImage<T>& original,
                    std::span<const BasicImage<T>> smoothed,
                    const BasicWeightMaps<T>& weights, int threads = 1) {
    detail::check_blend_shapes(original, smoothed, weights);
    BasicImage<T> out(original.width, original.height, original.channels);
    const size_t plane = weights.plane_size();
    parallel_rows(original.height, threads, [&](int y0, int y1) {
        for (int c = 0; c < original.channels; ++c) {
            const T* orig = original.plane(c);
            T* dst = out.plane(c);
            for (int y = y0; y < y1; ++y) {
                const size_t row = static_cast<size_t>(y) * original.width;
                for (int x = 0; x < original.width; ++x) {
                    size_t p = row + x;
                    double acc = static_cast<double>(weights.values[p]) * orig[p];
                    for (size_t i = 0; i < smoothed.size(); ++i)
                        acc += static_cast<double>(weights.values[plane * (i + 1) + p]) *
                               smoothed[i].plane(c)[p];
                    dst[p] = static_cast<T>(acc);
                }
            }
        }
    });
    return out;
}

// Reference evaluation of the same blend: plain loops, no tiling or threading,
// 64-bit accumulation throughout. Kept deliberately naive so the optimized
// path can be checked against it.
template <typename T>
BasicImage<T> brute_force_blend(const BasicImage<T>& original,
                                std::span<const BasicImage<T>> smoothed,
                                const BasicWeightMaps<T>& weights) {
    detail::check_blend_shapes(original, smoothed, weights);
    BasicImage<T> out(original.width, original.height, original.channels);
    for (int c = 0; c < original.channels; ++c) {
        for (int y = 0; y < original.height; ++y) {
            for (int x = 0; x < original.width; ++x) {
                double acc = static_cast<double>(weights.at(0, y, x)) * original.at(c, y, x);
                for (size_t i = 0; i < smoothed.size(); ++i)
                    acc += static_cast<double>(weights.at(static_cast<int>(i) + 1, y, x)) *
                           smoothed[i].at(c, y, x);
                out.at(c, y, x) = static_cast<T>(acc);
            }
        }
    }
    return out;
}

// One weight plane as a grayscale image, for the per-level PNG dumps.
template <typename T>
BasicImage<T> weight_plane_image(const BasicWeightMaps<T>& w, int level) {
    if (level < 0 || level >= w.levels)
        fail(ErrorCode::invalid_argument, "weight_plane_image: level out of range");
    BasicImage<T> img(w.width, w.height, 1);
    std::copy(w.plane(level), w.plane(level) + w.plane_size(), img.data.begin());
    return img;
}

} // namespace bokeh
