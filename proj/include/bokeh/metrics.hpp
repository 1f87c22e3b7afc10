#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bokeh/error.hpp"
#include "bokeh/image.hpp"

namespace bokeh {

// Peak signal-to-noise ratio for images in [0,1], capped at 99 dB so
// identical inputs stay finite.
template <typename T>
double psnr(const BasicImage<T>& a, const BasicImage<T>& b) {
    if (!a.same_shape(b))
        fail(ErrorCode::shape_mismatch, "psnr: image shapes differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sum += d * d;
    }
    double mse = sum / static_cast<double>(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline constexpr int ssim_window_size = 11;
inline constexpr double ssim_c1 = 0.01 * 0.01;
inline constexpr double ssim_c2 = 0.03 * 0.03;

// Fixed 11-tap Gaussian window with sigma 1.5 (a metric constant, not the
// smoothing-kernel sigma rule).
inline const std::vector<double>& ssim_window() {
    static const std::vector<double> taps = [] {
        std::vector<double> t(ssim_window_size);
        double sum = 0.0;
        for (int i = 0; i < ssim_window_size; ++i) {
            double d = i - (ssim_window_size - 1) / 2.0;
            t[i] = std::exp(-(d * d) / (2.0 * 1.5 * 1.5));
            sum += t[i];
        }
        for (auto& v : t) v /= sum;
        return t;
    }();
    return taps;
}

// Valid-mode separable window filter: output is (w-10) x (h-10).
inline void valid_filter(const std::vector<double>& in, int w, int h,
                         std::vector<double>& out) {
    const auto& taps = ssim_window();
    const int vw = w - ssim_window_size + 1;
    const int vh = h - ssim_window_size + 1;
    std::vector<double> tmp(static_cast<size_t>(vw) * h);
    for (int y = 0; y < h; ++y) {
        const double* src = in.data() + static_cast<size_t>(y) * w;
        double* dst = tmp.data() + static_cast<size_t>(y) * vw;
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < ssim_window_size; ++k) acc += taps[k] * src[x + k];
            dst[x] = acc;
        }
    }
    out.assign(static_cast<size_t>(vw) * vh, 0.0);
    for (int y = 0; y < vh; ++y) {
        double* dst = out.data() + static_cast<size_t>(y) * vw;
        for (int k = 0; k < ssim_window_size; ++k) {
            const double* src = tmp.data() + static_cast<size_t>(y + k) * vw;
            for (int x = 0; x < vw; ++x) dst[x] += taps[k] * src[x];
        }
    }
}

// Window statistics for one plane pair over all valid window positions.
struct SsimStats {
    int vw = 0;
    int vh = 0;
    std::vector<double> mux, muy, sxx, syy, sxy; // sxx etc. are variances
};

template <typename T>
SsimStats ssim_stats(const T* x, const T* y, int w, int h) {
    const size_t n = static_cast<size_t>(w) * h;
    std::vector<double> dx(n), dy(n), dxx(n), dyy(n), dxy(n);
    for (size_t i = 0; i < n; ++i) {
        double a = static_cast<double>(x[i]);
        double b = static_cast<double>(y[i]);
        dx[i] = a;
        dy[i] = b;
        dxx[i] = a * a;
        dyy[i] = b * b;
        dxy[i] = a * b;
    }
    SsimStats s;
    s.vw = w - ssim_window_size + 1;
    s.vh = h - ssim_window_size + 1;
    valid_filter(dx, w, h, s.mux);
    valid_filter(dy, w, h, s.muy);
    valid_filter(dxx, w, h, s.sxx);
    valid_filter(dyy, w, h, s.syy);
    valid_filter(dxy, w, h, s.sxy);
    for (size_t i = 0; i < s.mux.size(); ++i) {
        s.sxx[i] -= s.mux[i] * s.mux[i];
        s.syy[i] -= s.muy[i] * s.muy[i];
        s.sxy[i] -= s.mux[i] * s.muy[i];
    }
    return s;
}

inline double ssim_at(const SsimStats& s, size_t i) {
    double a1 = 2.0 * s.mux[i] * s.muy[i] + ssim_c1;
    double a2 = 2.0 * s.sxy[i] + ssim_c2;
    double b1 = s.mux[i] * s.mux[i] + s.muy[i] * s.muy[i] + ssim_c1;
    double b2 = s.sxx[i] + s.syy[i] + ssim_c2;
    return (a1 * a2) / (b1 * b2);
}

} // namespace detail

// Mean structural similarity over all valid 11x11 window positions,
// averaged across channels. Both images must be at least 11x11.
template <typename T>
double ssim(const BasicImage<T>& a, const BasicImage<T>& b) {
    if (!a.same_shape(b))
        fail(ErrorCode::shape_mismatch, "ssim: image shapes differ");
    if (a.width < detail::ssim_window_size || a.height < detail::ssim_window_size)
        fail(ErrorCode::invalid_argument, "ssim: images must be at least 11x11");
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        detail::SsimStats s = detail::ssim_stats(a.plane(c), b.plane(c), a.width, a.height);
        double acc = 0.0;
        const size_t n = s.mux.size();
        for (size_t i = 0; i < n; ++i) acc += detail::ssim_at(s, i);
        total += acc / static_cast<double>(n);
    }
    return total / a.channels;
}

} // namespace bokeh
