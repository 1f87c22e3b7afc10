#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bokeh/error.hpp"

namespace bokeh {

// Planar raster: data[(c*height + y)*width + x], samples in [0, 1].
template <typename T>
struct BasicImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<T> data;

    BasicImage() = default;
    BasicImage(int w, int h, int c, T fill = T(0))
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    size_t plane_size() const { return static_cast<size_t>(width) * height; }
    size_t size() const { return data.size(); }

    T* plane(int c) { return data.data() + plane_size() * c; }
    const T* plane(int c) const { return data.data() + plane_size() * c; }

    T& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    T at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const BasicImage& other) const {
        return width == other.width && height == other.height &&
               channels == other.channels;
    }
};

using Image = BasicImage<float>;

// Single-channel scene depth, 0 = nearest to camera, 1 = farthest.
template <typename T>
struct BasicDepthMap {
    int width = 0;
    int height = 0;
    std::vector<T> values;

    BasicDepthMap() = default;
    BasicDepthMap(int w, int h, T fill = T(0))
        : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

    T& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    T at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

using DepthMap = BasicDepthMap<float>;

enum class Axis { horizontal, vertical };

template <typename T, typename U>
BasicImage<T> convert_image(const BasicImage<U>& img) {
    BasicImage<T> out(img.width, img.height, img.channels);
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<T>(img.data[i]);
    return out;
}

template <typename T, typename U>
BasicDepthMap<T> convert_depth(const BasicDepthMap<U>& d) {
    BasicDepthMap<T> out(d.width, d.height);
    for (size_t i = 0; i < d.values.size(); ++i) out.values[i] = static_cast<T>(d.values[i]);
    return out;
}

namespace detail {

// Half-pixel-center convention: src = (dst + 0.5) * scale - 0.5, clamped.
template <typename T>
void resize_plane_bilinear(const T* src, int sw, int sh, T* dst, int dw, int dh) {
    const double sx_scale = static_cast<double>(sw) / dw;
    const double sy_scale = static_cast<double>(sh) / dh;
    for (int y = 0; y < dh; ++y) {
        double fy = (y + 0.5) * sy_scale - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, sh - 1);
        double wy = fy - y0;
        const T* row0 = src + static_cast<size_t>(y0) * sw;
        const T* row1 = src + static_cast<size_t>(y1) * sw;
        T* out = dst + static_cast<size_t>(y) * dw;
        for (int x = 0; x < dw; ++x) {
            double fx = (x + 0.5) * sx_scale - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, sw - 1);
            double wx = fx - x0;
            double top = row0[x0] + (row0[x1] - static_cast<double>(row0[x0])) * wx;
            double bot = row1[x0] + (row1[x1] - static_cast<double>(row1[x0])) * wx;
            out[x] = static_cast<T>(top + (bot - top) * wy);
        }
    }
}

template <typename T>
void flip_plane(const T* src, int w, int h, T* dst, Axis axis) {
    if (axis == Axis::horizontal) {
        for (int y = 0; y < h; ++y) {
            const T* in = src + static_cast<size_t>(y) * w;
            T* out = dst + static_cast<size_t>(y) * w;
            for (int x = 0; x < w; ++x) out[x] = in[w - 1 - x];
        }
    } else {
        for (int y = 0; y < h; ++y) {
            const T* in = src + static_cast<size_t>(h - 1 - y) * w;
            T* out = dst + static_cast<size_t>(y) * w;
            std::copy(in, in + w, out);
        }
    }
}

} // namespace detail

template <typename T>
BasicImage<T> resize_bilinear(const BasicImage<T>& img, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1)
        fail(ErrorCode::invalid_argument, "resize_bilinear: target dimensions must be >= 1");
    BasicImage<T> out(new_w, new_h, img.channels);
    for (int c = 0; c < img.channels; ++c)
        detail::resize_plane_bilinear(img.plane(c), img.width, img.height,
                                      out.plane(c), new_w, new_h);
    return out;
}

template <typename T>
BasicDepthMap<T> resize_bilinear(const BasicDepthMap<T>& d, int new_w, int new_h) {
    if (new_w < 1 || new_h < 1)
        fail(ErrorCode::invalid_argument, "resize_bilinear: target dimensions must be >= 1");
    BasicDepthMap<T> out(new_w, new_h);
    detail::resize_plane_bilinear(d.values.data(), d.width, d.height,
                                  out.values.data(), new_w, new_h);
    return out;
}

template <typename T>
BasicImage<T> flip(const BasicImage<T>& img, Axis axis) {
    BasicImage<T> out(img.width, img.height, img.channels);
    for (int c = 0; c < img.channels; ++c)
        detail::flip_plane(img.plane(c), img.width, img.height, out.plane(c), axis);
    return out;
}

template <typename T>
BasicDepthMap<T> flip(const BasicDepthMap<T>& d, Axis axis) {
    BasicDepthMap<T> out(d.width, d.height);
    detail::flip_plane(d.values.data(), d.width, d.height, out.values.data(), axis);
    return out;
}

} // namespace bokeh
