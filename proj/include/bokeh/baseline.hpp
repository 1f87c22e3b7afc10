#pragma once

#include <algorithm>
#include <span>

#include "bokeh/blend.hpp"
#include "bokeh/blur.hpp"
#include "bokeh/error.hpp"
#include "bokeh/image.hpp"

namespace bokeh {

inline constexpr int baseline_blur_size = 75;

// Saliency compositing: salient pixels keep the input, the rest gets the
// 75-tap blur. This is the two-level blend with W_0 = S, so a binary map
// selects pixels exactly.
template <typename T>
BasicImage<T> saliency_bokeh(const BasicImage<T>& img, const BasicImage<T>& saliency,
                             int threads = 1) {
    if (saliency.channels != 1)
        fail(ErrorCode::shape_mismatch, "saliency map must be single-channel");
    if (saliency.width != img.width || saliency.height != img.height)
        fail(ErrorCode::shape_mismatch, "saliency dims do not match image");
    for (T v : saliency.data)
        if (!(v >= T(0) && v <= T(1)))
            fail(ErrorCode::invalid_argument, "saliency values must lie in [0,1]");

    BasicImage<T> blurred = gaussian_blur(img, baseline_blur_size, threads);
    BasicWeightMaps<T> w(img.width, img.height, 2);
    const size_t plane = w.plane_size();
    for (size_t p = 0; p < plane; ++p) {
        w.values[p] = saliency.data[p];
        w.values[plane + p] = T(1) - saliency.data[p];
    }
    return blend(img, std::span<const BasicImage<T>>(&blurred, 1), w, threads);
}

// Fallback saliency when no map is supplied: a centered ellipse with a
// linear falloff, 1 at the center, 0 from the ellipse boundary outward.
template <typename T = float>
BasicImage<T> center_prior_saliency(int width, int height) {
    if (width < 1 || height < 1)
        fail(ErrorCode::invalid_argument, "saliency dims must be positive");
    BasicImage<T> s(width, height, 1);
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    const double ax = std::max(1.0, 0.45 * width);
    const double ay = std::max(1.0, 0.45 * height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = (x - cx) / ax;
            const double dy = (y - cy) / ay;
            const double d = dx * dx + dy * dy;
            s.at(0, y, x) = static_cast<T>(std::clamp(1.0 - d, 0.0, 1.0));
        }
    }
    return s;
}

} // namespace bokeh
