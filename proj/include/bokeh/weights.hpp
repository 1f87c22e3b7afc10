#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bokeh/blend.hpp"
#include "bokeh/blur.hpp"
#include "bokeh/error.hpp"
#include "bokeh/fileutil.hpp"
#include "bokeh/image.hpp"
#include "bokeh/parallel.hpp"
#include "bokeh/rng.hpp"

namespace bokeh {

// ---------------------------------------------------------------------------
// Depth-driven logits (the parametric, training-free path)
// ---------------------------------------------------------------------------

struct FocusParams {
    double focus = 0.0; // depth value that stays sharp, in [0,1]
    double tau = 0.05;  // softness of the level assignment, > 0
};

inline void check_focus(const FocusParams& fp) {
    if (!(fp.focus >= 0.0 && fp.focus <= 1.0))
        fail(ErrorCode::invalid_argument, "focus must lie in [0,1]");
    if (!(fp.tau > 0.0))
        fail(ErrorCode::invalid_argument, "tau must be positive");
}

// Normalized distance from the focal plane: 0 at the focus, 1 at the far end
// of the depth range on the side that is farther from the focus.
inline double focus_distance(double depth, double focus) {
    return std::abs(depth - focus) / std::max(focus, 1.0 - focus);
}

// Evenly spaced level centers over [0,1]; level 0 is the sharp image.
inline std::vector<double> level_centers(int levels) {
    if (levels < 1)
        fail(ErrorCode::invalid_argument, "level_centers: levels must be >= 1");
    std::vector<double> c(levels, 0.0);
    for (int i = 1; i < levels; ++i)
        c[i] = static_cast<double>(i) / (levels - 1);
    return c;
}

// Each level scores -(s - center)^2 / tau, so after the softmax a pixel's
// weight concentrates on the level whose center is nearest its defocus
// distance, with tau controlling how hard the assignment is.
template <typename T>
BasicLogits<T> depth_to_logits(const BasicDepthMap<T>& depth, int levels,
                               const FocusParams& fp = {}) {
    check_focus(fp);
    const std::vector<double> centers = level_centers(levels);
    BasicLogits<T> out(depth.width, depth.height, levels);
    const size_t plane = out.plane_size();
    for (size_t p = 0; p < plane; ++p) {
        double s = focus_distance(depth.values[p], fp.focus);
        for (int i = 0; i < levels; ++i) {
            double d = s - centers[i];
            out.values[plane * i + p] = static_cast<T>(-(d * d) / fp.tau);
        }
    }
    return out;
}

// One-hot selection of the nearest level center; ties go to the smaller
// index (the sharper level).
template <typename T>
BasicWeightMaps<T> hard_weights(const BasicDepthMap<T>& depth, int levels,
                                const FocusParams& fp = {}) {
    check_focus(fp);
    const std::vector<double> centers = level_centers(levels);
    BasicWeightMaps<T> w(depth.width, depth.height, levels, T(0));
    const size_t plane = w.plane_size();
    for (size_t p = 0; p < plane; ++p) {
        double s = focus_distance(depth.values[p], fp.focus);
        int best = 0;
        double best_d = std::abs(s - centers[0]);
        for (int i = 1; i < levels; ++i) {
            double d = std::abs(s - centers[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        w.values[plane * best + p] = T(1);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Learned weight head: two 3x3 convolutions over (R,G,B,depth)
// ---------------------------------------------------------------------------

template <typename T>
struct BasicConv3x3 {
    int in_ch = 0;
    int out_ch = 0;
    std::vector<T> w; // [out][in][3][3]
    std::vector<T> b; // [out]

    BasicConv3x3() = default;
    BasicConv3x3(int in, int out)
        : in_ch(in), out_ch(out),
          w(static_cast<size_t>(out) * in * 9, T(0)), b(out, T(0)) {}

    T& wat(int o, int i, int ky, int kx) {
        return w[((static_cast<size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx];
    }
    T wat(int o, int i, int ky, int kx) const {
        return w[((static_cast<size_t>(o) * in_ch + i) * 3 + ky) * 3 + kx];
    }
};

template <typename T>
struct BasicWeightHead {
    static constexpr int input_channels = 4; // R, G, B, depth
    static constexpr int hidden_channels = 8;

    BasicConv3x3<T> conv1; // 4 -> 8
    BasicConv3x3<T> conv2; // 8 -> levels

    BasicWeightHead() = default;
    explicit BasicWeightHead(int levels)
        : conv1(input_channels, hidden_channels),
          conv2(hidden_channels, levels) {}

    int levels() const { return conv2.out_ch; }
};

using WeightHead = BasicWeightHead<float>;

template <typename T, typename U>
BasicConv3x3<U> convert_conv(const BasicConv3x3<T>& c) {
    BasicConv3x3<U> out(c.in_ch, c.out_ch);
    for (size_t i = 0; i < c.w.size(); ++i) out.w[i] = static_cast<U>(c.w[i]);
    for (size_t i = 0; i < c.b.size(); ++i) out.b[i] = static_cast<U>(c.b[i]);
    return out;
}

template <typename U, typename T>
BasicWeightHead<U> convert_head(const BasicWeightHead<T>& h) {
    BasicWeightHead<U> out;
    out.conv1 = convert_conv<T, U>(h.conv1);
    out.conv2 = convert_conv<T, U>(h.conv2);
    return out;
}

// The four parameter tensors in serialization order.
template <typename T>
std::array<std::vector<T>*, 4> param_tensors(BasicWeightHead<T>& h) {
    return {&h.conv1.w, &h.conv1.b, &h.conv2.w, &h.conv2.b};
}

template <typename T>
std::array<const std::vector<T>*, 4> param_tensors(const BasicWeightHead<T>& h) {
    return {&h.conv1.w, &h.conv1.b, &h.conv2.w, &h.conv2.b};
}

template <typename T>
size_t param_count(const BasicWeightHead<T>& h) {
    size_t n = 0;
    for (const auto* t : param_tensors(h)) n += t->size();
    return n;
}

// Flat parameter addressing across the four tensors, in their serialization
// order.
template <typename T>
T& param_at(BasicWeightHead<T>& h, size_t idx) {
    for (auto* t : param_tensors(h)) {
        if (idx < t->size()) return (*t)[idx];
        idx -= t->size();
    }
    fail(ErrorCode::invalid_argument, "param_at: index out of range");
}

// Uniform fan-in init for conv1; conv2 starts 100x smaller so the head
// begins close to a uniform soft assignment. Biases start at zero.
inline WeightHead head_init(int levels, uint64_t seed) {
    if (levels < 2)
        fail(ErrorCode::invalid_argument, "head_init: need at least 2 levels");
    WeightHead h(levels);
    Rng rng(seed);
    {
        double a = std::sqrt(6.0 / (h.conv1.in_ch * 9));
        for (auto& v : h.conv1.w) v = static_cast<float>(rng.next_range(-a, a));
    }
    {
        double a = std::sqrt(6.0 / (h.conv2.in_ch * 9));
        for (auto& v : h.conv2.w)
            v = static_cast<float>(rng.next_range(-a, a) * 0.01);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

template <typename T>
BasicLogits<T> conv3x3_reflect(const BasicLogits<T>& in, const BasicConv3x3<T>& conv,
                               int threads = 1) {
    if (in.levels != conv.in_ch)
        fail(ErrorCode::shape_mismatch, "conv3x3: input channel mismatch");
    if (in.width < 2 || in.height < 2)
        fail(ErrorCode::invalid_argument, "conv3x3: input must be at least 2x2");
    BasicLogits<T> out(in.width, in.height, conv.out_ch);
    const int w = in.width;
    const int h = in.height;
    const size_t plane = in.plane_size();
    parallel_rows(h, threads, [&](int y0, int y1) {
        for (int o = 0; o < conv.out_ch; ++o) {
            T* dst = out.plane(o);
            for (int y = y0; y < y1; ++y) {
                const int ry[3] = {detail::reflect_index(y - 1, h), y,
                                   detail::reflect_index(y + 1, h)};
                for (int x = 0; x < w; ++x) {
                    const int rx[3] = {detail::reflect_index(x - 1, w), x,
                                       detail::reflect_index(x + 1, w)};
                    double acc = conv.b[o];
                    for (int i = 0; i < conv.in_ch; ++i) {
                        const T* src = in.values.data() + plane * i;
                        for (int ky = 0; ky < 3; ++ky) {
                            const T* row = src + static_cast<size_t>(ry[ky]) * w;
                            acc += static_cast<double>(conv.wat(o, i, ky, 0)) * row[rx[0]] +
                                   static_cast<double>(conv.wat(o, i, ky, 1)) * row[rx[1]] +
                                   static_cast<double>(conv.wat(o, i, ky, 2)) * row[rx[2]];
                        }
                    }
                    dst[static_cast<size_t>(y) * w + x] = static_cast<T>(acc);
                }
            }
        }
    });
    return out;
}

template <typename T>
void relu_inplace(BasicLogits<T>& a) {
    for (auto& v : a.values)
        if (v < T(0)) v = T(0);
}

// Intermediate activations, kept when the caller needs to backpropagate.
template <typename T>
struct HeadTrace {
    BasicLogits<T> input; // 4 planes: R, G, B, depth
    BasicLogits<T> pre1;  // conv1 output before the ReLU
    BasicLogits<T> act1;  // after the ReLU
};

// Stacks the color planes and the depth map into a 4-channel input. A
// single-channel image contributes the same plane three times.
template <typename T>
BasicLogits<T> head_input(const BasicImage<T>& img, const BasicDepthMap<T>& depth) {
    if (depth.width != img.width || depth.height != img.height)
        fail(ErrorCode::shape_mismatch, "head_input: depth dims do not match image");
    if (img.channels != 3 && img.channels != 1)
        fail(ErrorCode::shape_mismatch, "head_input: image must have 1 or 3 channels");
    BasicLogits<T> in(img.width, img.height, 4);
    const size_t plane = in.plane_size();
    for (int c = 0; c < 3; ++c) {
        const T* src = img.plane(img.channels == 3 ? c : 0);
        std::copy(src, src + plane, in.values.data() + plane * c);
    }
    std::copy(depth.values.begin(), depth.values.end(), in.values.data() + plane * 3);
    return in;
}

template <typename T>
BasicLogits<T> head_forward(const BasicImage<T>& img, const BasicDepthMap<T>& depth,
                            const BasicWeightHead<T>& head, int threads = 1,
                            HeadTrace<T>* trace = nullptr) {
    BasicLogits<T> in = head_input(img, depth);
    BasicLogits<T> a1 = conv3x3_reflect(in, head.conv1, threads);
    if (trace) {
        trace->input = in;
        trace->pre1 = a1;
    }
    relu_inplace(a1);
    BasicLogits<T> logits = conv3x3_reflect(a1, head.conv2, threads);
    if (trace) trace->act1 = std::move(a1);
    return logits;
}

// ---------------------------------------------------------------------------
// Model file format
//
//   bytes 0..7   magic "BKWH0001"
//   u32          level count (weight planes, = conv2 out channels)
//   4 tensors    conv1.w, conv1.b, conv2.w, conv2.b, each stored as
//                u32 ndim, ndim x u32 dims, then prod(dims) f32 values
//
// All integers and floats are little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char head_magic[8] = {'B', 'K', 'W', 'H', '0', '0', '0', '1'};

inline void write_u32(std::FILE* f, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    if (std::fwrite(b, 1, 4, f) != 4)
        fail(ErrorCode::file_unwritable, "short write");
}

inline void write_f32(std::FILE* f, float v) {
    uint32_t u;
    static_assert(sizeof(u) == sizeof(v));
    std::memcpy(&u, &v, 4);
    write_u32(f, u);
}

inline bool read_u32(std::FILE* f, uint32_t& v) {
    unsigned char b[4];
    if (std::fread(b, 1, 4, f) != 4) return false;
    v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return true;
}

inline bool read_f32(std::FILE* f, float& v) {
    uint32_t u;
    if (!read_u32(f, u)) return false;
    std::memcpy(&v, &u, 4);
    return true;
}

inline void write_tensor(std::FILE* f, const std::vector<float>& t,
                         std::initializer_list<uint32_t> dims) {
    write_u32(f, static_cast<uint32_t>(dims.size()));
    size_t n = 1;
    for (uint32_t d : dims) {
        write_u32(f, d);
        n *= d;
    }
    if (n != t.size())
        fail(ErrorCode::shape_mismatch, "write_tensor: dims do not match data");
    for (float v : t) write_f32(f, v);
}

inline void read_tensor(std::FILE* f, std::vector<float>& t,
                        std::initializer_list<uint32_t> dims, const std::string& path) {
    uint32_t ndim = 0;
    if (!read_u32(f, ndim) || ndim != dims.size())
        fail(ErrorCode::unsupported_format, path + ": bad tensor header");
    size_t n = 1;
    for (uint32_t want : dims) {
        uint32_t got = 0;
        if (!read_u32(f, got) || got != want)
            fail(ErrorCode::unsupported_format, path + ": unexpected tensor shape");
        n *= want;
    }
    t.resize(n);
    for (auto& v : t)
        if (!read_f32(f, v))
            fail(ErrorCode::unsupported_format, path + ": truncated tensor data");
}

} // namespace detail

namespace detail {

inline void write_head_payload(std::FILE* f, const WeightHead& head, const std::string& path) {
    if (std::fwrite(head_magic, 1, 8, f) != 8)
        fail(ErrorCode::file_unwritable, "short write to " + path);
    const uint32_t levels = static_cast<uint32_t>(head.levels());
    const uint32_t hidden = WeightHead::hidden_channels;
    const uint32_t in_ch = WeightHead::input_channels;
    write_u32(f, levels);
    write_tensor(f, head.conv1.w, {hidden, in_ch, 3, 3});
    write_tensor(f, head.conv1.b, {hidden});
    write_tensor(f, head.conv2.w, {levels, hidden, 3, 3});
    write_tensor(f, head.conv2.b, {levels});
}

inline WeightHead read_head_payload(std::FILE* f, const std::string& path) {
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, head_magic, 8) != 0)
        fail(ErrorCode::unsupported_format, path + ": not a weight-head file");
    uint32_t levels = 0;
    if (!read_u32(f, levels) || levels < 2 || levels > 64)
        fail(ErrorCode::unsupported_format, path + ": bad level count");
    WeightHead head(static_cast<int>(levels));
    const uint32_t hidden = WeightHead::hidden_channels;
    const uint32_t in_ch = WeightHead::input_channels;
    read_tensor(f, head.conv1.w, {hidden, in_ch, 3, 3}, path);
    read_tensor(f, head.conv1.b, {hidden}, path);
    read_tensor(f, head.conv2.w, {levels, hidden, 3, 3}, path);
    read_tensor(f, head.conv2.b, {levels}, path);
    return head;
}

} // namespace detail

inline void save_head(const WeightHead& head, const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f)
        fail(ErrorCode::file_unwritable, "cannot open " + path + " for writing");
    detail::write_head_payload(f.get(), head, path);
    if (std::fflush(f.get()) != 0)
        fail(ErrorCode::file_unwritable, "short write to " + path);
}

inline WeightHead load_head(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f)
        fail(ErrorCode::file_unreadable, "cannot open " + path);
    return detail::read_head_payload(f.get(), path);
}

// ---------------------------------------------------------------------------
// Renderers
// ---------------------------------------------------------------------------

// Depth-driven render: soft (softmax over quadratic level scores) or hard
// (nearest level only).
template <typename T>
BasicImage<T> parametric_render(const BasicImage<T>& img, const BasicDepthMap<T>& depth,
                                std::span<const int> sizes, const FocusParams& fp = {},
                                bool hard = false, int threads = 1,
                                BasicWeightMaps<T>* weights_out = nullptr) {
    if (depth.width != img.width || depth.height != img.height)
        fail(ErrorCode::shape_mismatch, "parametric_render: depth dims do not match image");
    std::vector<BasicImage<T>> smoothed = blur_stack(img, sizes, threads);
    const int levels = static_cast<int>(sizes.size()) + 1;
    BasicWeightMaps<T> w =
        hard ? hard_weights(depth, levels, fp)
             : spatial_softmax(depth_to_logits(depth, levels, fp), threads);
    BasicImage<T> out = blend(img, std::span<const BasicImage<T>>(smoothed), w, threads);
    if (weights_out) *weights_out = std::move(w);
    return out;
}

// Learned render: the weight head supplies the logits.
template <typename T>
BasicImage<T> head_render(const BasicImage<T>& img, const BasicDepthMap<T>& depth,
                          const BasicWeightHead<T>& head, std::span<const int> sizes,
                          int threads = 1, BasicWeightMaps<T>* weights_out = nullptr) {
    if (head.levels() != static_cast<int>(sizes.size()) + 1)
        fail(ErrorCode::shape_mismatch, "head_render: head levels do not match kernel count");
    std::vector<BasicImage<T>> smoothed = blur_stack(img, sizes, threads);
    BasicWeightMaps<T> w = spatial_softmax(head_forward(img, depth, head, threads), threads);
    BasicImage<T> out = blend(img, std::span<const BasicImage<T>>(smoothed), w, threads);
    if (weights_out) *weights_out = std::move(w);
    return out;
}

} // namespace bokeh
