#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/image.hpp"
#include "bokeh/parallel.hpp"

namespace bokeh {

// Normalized symmetric 1D Gaussian, taps sum to 1.
struct GaussianKernel1d {
    int size = 1;
    double sigma = 0.0;
    std::vector<double> taps;

    int radius() const { return (size - 1) / 2; }
};

// sigma follows the usual kernel-size rule: 0.3*((size-1)/2 - 1) + 0.8.
inline GaussianKernel1d make_gaussian_kernel(int size) {
    if (size < 1 || size % 2 == 0)
        fail(ErrorCode::invalid_argument,
             "gaussian kernel size must be odd and positive, got " + std::to_string(size));
    GaussianKernel1d k;
    k.size = size;
    k.sigma = 0.3 * ((size - 1) * 0.5 - 1.0) + 0.8;
    k.taps.resize(size);
    const int r = k.radius();
    double sum = 0.0;
    for (int d = -r; d <= r; ++d) {
        double t = std::exp(-(static_cast<double>(d) * d) / (2.0 * k.sigma * k.sigma));
        k.taps[d + r] = t;
        sum += t;
    }
    for (double& t : k.taps) t /= sum;
    return k;
}

namespace detail {

// Reflect-101 index (edge pixel not repeated): -1 -> 1, n -> n-2.
inline int reflect_index(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * (n - 1) - i;
    return i;
}

// One separable pass over a single plane. Accumulates in double and rounds
// once per sample, pairing the symmetric taps, so constants survive the blur
// bit-exactly and the result commutes with flips.
template <typename T>
void blur_pass_horizontal(const T* src, int w, int h, const GaussianKernel1d& k,
                          T* dst, int y0, int y1) {
    const int r = k.radius();
    const double* taps = k.taps.data();
    std::vector<double> padded(static_cast<size_t>(w) + 2 * r);
    for (int y = y0; y < y1; ++y) {
        const T* row = src + static_cast<size_t>(y) * w;
        for (int i = -r; i < w + r; ++i)
            padded[i + r] = row[reflect_index(i, w)];
        const double* p = padded.data() + r;
        T* out = dst + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            double acc = taps[r] * p[x];
            for (int d = 1; d <= r; ++d)
                acc += taps[r + d] * (p[x - d] + p[x + d]);
            out[x] = static_cast<T>(acc);
        }
    }
}

template <typename T>
void blur_pass_vertical(const T* src, int w, int h, const GaussianKernel1d& k,
                        T* dst, int y0, int y1) {
    const int r = k.radius();
    const double* taps = k.taps.data();
    std::vector<double> acc(w);
    for (int y = y0; y < y1; ++y) {
        const T* center = src + static_cast<size_t>(y) * w;
        const double t0 = taps[r];
        for (int x = 0; x < w; ++x) acc[x] = t0 * center[x];
        for (int d = 1; d <= r; ++d) {
            const T* up = src + static_cast<size_t>(reflect_index(y - d, h)) * w;
            const T* down = src + static_cast<size_t>(reflect_index(y + d, h)) * w;
            const double t = taps[r + d];
            for (int x = 0; x < w; ++x)
                acc[x] += t * (static_cast<double>(up[x]) + down[x]);
        }
        T* out = dst + static_cast<size_t>(y) * w;
        for (int x = 0; x < w; ++x) out[x] = static_cast<T>(acc[x]);
    }
}

} // namespace detail

// Separable Gaussian blur with reflect-101 borders. Output dims equal input
// dims; range stays inside [min(img), max(img)] since the taps are convex.
template <typename T>
BasicImage<T> gaussian_blur(const BasicImage<T>& img, int size, int threads = 1) {
    GaussianKernel1d k = make_gaussian_kernel(size);
    const int r = k.radius();
    // Reflect-101 needs r <= dim-1 in each pass direction.
    if (r > img.width - 1 || r > img.height - 1)
        fail(ErrorCode::kernel_too_large,
             "kernel size " + std::to_string(size) + " exceeds reflect limit for " +
                 std::to_string(img.width) + "x" + std::to_string(img.height) + " image");

    BasicImage<T> tmp(img.width, img.height, img.channels);
    BasicImage<T> out(img.width, img.height, img.channels);
    for (int c = 0; c < img.channels; ++c) {
        const T* src = img.plane(c);
        T* mid = tmp.plane(c);
        T* dst = out.plane(c);
        parallel_rows(img.height, threads, [&](int y0, int y1) {
            detail::blur_pass_horizontal(src, img.width, img.height, k, mid, y0, y1);
        });
        parallel_rows(img.height, threads, [&](int y0, int y1) {
            detail::blur_pass_vertical(mid, img.width, img.height, k, dst, y0, y1);
        });
    }
    return out;
}

// The smoothed images B(img, k_i), one per kernel size, order preserved.
template <typename T>
std::vector<BasicImage<T>> blur_stack(const BasicImage<T>& img,
                                      std::span<const int> sizes, int threads = 1) {
    if (sizes.empty())
        fail(ErrorCode::invalid_argument, "blur_stack: need at least one kernel size");
    std::vector<BasicImage<T>> out;
    out.reserve(sizes.size());
    for (int s : sizes) out.push_back(gaussian_blur(img, s, threads));
    return out;
}

} // namespace bokeh
