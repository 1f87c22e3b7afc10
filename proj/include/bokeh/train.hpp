#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bokeh/blend.hpp"
#include "bokeh/blur.hpp"
#include "bokeh/error.hpp"
#include "bokeh/image.hpp"
#include "bokeh/metrics.hpp"
#include "bokeh/rng.hpp"
#include "bokeh/weights.hpp"

namespace bokeh {

enum class LossKind { l1, neg_ssim };

inline std::string loss_name(LossKind k) {
    return k == LossKind::l1 ? "l1" : "ssim";
}

// ---------------------------------------------------------------------------
// Optimizer and schedule types
// ---------------------------------------------------------------------------

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;
};

struct AdamState {
    uint64_t step = 0;
    WeightHead m; // first-moment accumulators, parameter-shaped
    WeightHead v; // second-moment accumulators, elementwise >= 0

    AdamState() = default;
    explicit AdamState(int levels) : m(levels), v(levels) {}
};

struct PhaseConfig {
    int id = 1;
    int train_w = 512;
    int train_h = 384;
    LossKind loss = LossKind::l1;
    int iterations = 300;
    double lr_start = 1e-3;
    double lr_end = 1e-4;
};

// Defaults: low-resolution reconstruction, high-resolution reconstruction,
// then structural-similarity fine-tuning, with the learning rate decaying
// from 1e-3 down to 1e-5 across the run. Iteration counts are sized for CPU
// runs and are expected to be overridden from the config file.
inline PhaseConfig default_phase(int id) {
    switch (id) {
    case 1: return {1, 512, 384, LossKind::l1, 300, 1e-3, 1e-4};
    case 2: return {2, 1024, 768, LossKind::l1, 150, 1e-4, 3e-5};
    case 3: return {3, 1024, 768, LossKind::neg_ssim, 150, 3e-5, 1e-5};
    default:
        fail(ErrorCode::invalid_argument, "phase id must be 1, 2 or 3");
    }
}

inline std::vector<PhaseConfig> default_phases() {
    return {default_phase(1), default_phase(2), default_phase(3)};
}

template <typename T>
struct BasicSamplePair {
    BasicImage<T> input;
    BasicDepthMap<T> depth;
    BasicImage<T> target;
};

using SamplePair = BasicSamplePair<float>;

template <typename T>
void check_sample(const BasicSamplePair<T>& s) {
    if (s.depth.width != s.input.width || s.depth.height != s.input.height)
        fail(ErrorCode::shape_mismatch, "sample depth dims do not match input");
    if (!s.target.same_shape(s.input))
        fail(ErrorCode::shape_mismatch, "sample target dims do not match input");
}

template <typename U, typename T>
BasicSamplePair<U> convert_sample(const BasicSamplePair<T>& s) {
    return {convert_image<U, T>(s.input), convert_depth<U, T>(s.depth),
            convert_image<U, T>(s.target)};
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename T>
double l1_loss(const BasicImage<T>& pred, const BasicImage<T>& target) {
    if (!pred.same_shape(target))
        fail(ErrorCode::shape_mismatch, "l1_loss: image shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i)
        acc += std::abs(static_cast<double>(pred.data[i]) -
                        static_cast<double>(target.data[i]));
    return acc / static_cast<double>(pred.data.size());
}

template <typename T>
double ssim_loss(const BasicImage<T>& pred, const BasicImage<T>& target) {
    return -ssim(pred, target);
}

template <typename T>
double loss_value(LossKind kind, const BasicImage<T>& pred, const BasicImage<T>& target) {
    return kind == LossKind::l1 ? l1_loss(pred, target) : ssim_loss(pred, target);
}

// ---------------------------------------------------------------------------
// Analytic gradients
// ---------------------------------------------------------------------------

namespace detail {

// d(-mean SSIM of this plane)/dx accumulated into u, scaled by `scale`.
// For window position p and pixel q inside it,
//   dS_p/dx_q = (2 w_{q-p} / (B1 B2)) *
//               (muy*A2 + A1*(y_q - muy) - S_p*(mux*B2 + B1*(x_q - mux)))
// with A1 = 2 mux muy + C1, A2 = 2 sxy + C2, B1 = mux^2 + muy^2 + C1,
// B2 = sxx + syy + C2.
template <typename T>
void ssim_plane_grad(const T* x, const T* y, int w, int h, double scale, double* u) {
    const SsimStats s = ssim_stats(x, y, w, h);
    const auto& taps = ssim_window();
    const int win = ssim_window_size;
    const double per_pos = scale / (static_cast<double>(s.vw) * s.vh);
    for (int vy = 0; vy < s.vh; ++vy) {
        for (int vx = 0; vx < s.vw; ++vx) {
            const size_t i = static_cast<size_t>(vy) * s.vw + vx;
            const double mux = s.mux[i], muy = s.muy[i];
            const double a1 = 2.0 * mux * muy + ssim_c1;
            const double a2 = 2.0 * s.sxy[i] + ssim_c2;
            const double b1 = mux * mux + muy * muy + ssim_c1;
            const double b2 = s.sxx[i] + s.syy[i] + ssim_c2;
            const double d = b1 * b2;
            const double sv = (a1 * a2) / d;
            const double base = muy * a2 - sv * mux * b2;
            const double k = 2.0 * per_pos / d;
            for (int ky = 0; ky < win; ++ky) {
                const size_t row = static_cast<size_t>(vy + ky) * w + vx;
                const double wy = taps[ky];
                for (int kx = 0; kx < win; ++kx) {
                    const size_t q = row + kx;
                    const double xq = x[q], yq = y[q];
                    u[q] += k * wy * taps[kx] *
                            (base + a1 * (yq - muy) - sv * b1 * (xq - mux));
                }
            }
        }
    }
}

template <typename T>
void loss_grad(LossKind kind, const BasicImage<T>& pred, const BasicImage<T>& target,
               std::vector<double>& u) {
    u.assign(pred.data.size(), 0.0);
    if (kind == LossKind::l1) {
        const double inv = 1.0 / static_cast<double>(pred.data.size());
        for (size_t i = 0; i < pred.data.size(); ++i) {
            double d = static_cast<double>(pred.data[i]) -
                       static_cast<double>(target.data[i]);
            u[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
        }
    } else {
        const size_t plane = pred.plane_size();
        for (int c = 0; c < pred.channels; ++c)
            ssim_plane_grad(pred.plane(c), target.plane(c), pred.width, pred.height,
                            -1.0 / pred.channels, u.data() + plane * c);
    }
}

// Parameter gradients for one 3x3 reflect-padded convolution, plus
// (optionally) the gradient with respect to its input. The scatter into
// grad_in mirrors the forward's reflected reads.
template <typename T>
void conv3x3_backward(const BasicLogits<T>& in, const BasicConv3x3<T>& conv,
                      const std::vector<double>& grad_out, std::vector<double>* grad_in,
                      std::vector<double>& gw, std::vector<double>& gb) {
    const int w = in.width;
    const int h = in.height;
    const size_t plane = in.plane_size();
    gw.assign(conv.w.size(), 0.0);
    gb.assign(conv.b.size(), 0.0);
    if (grad_in) grad_in->assign(plane * in.levels, 0.0);
    for (int o = 0; o < conv.out_ch; ++o) {
        const double* go = grad_out.data() + plane * o;
        for (int y = 0; y < h; ++y) {
            const int ry[3] = {reflect_index(y - 1, h), y, reflect_index(y + 1, h)};
            for (int x = 0; x < w; ++x) {
                const double g = go[static_cast<size_t>(y) * w + x];
                if (g == 0.0) continue;
                const int rx[3] = {reflect_index(x - 1, w), x, reflect_index(x + 1, w)};
                gb[o] += g;
                for (int i = 0; i < conv.in_ch; ++i) {
                    const T* src = in.values.data() + plane * i;
                    double* gi = grad_in ? grad_in->data() + plane * i : nullptr;
                    for (int ky = 0; ky < 3; ++ky) {
                        const size_t row = static_cast<size_t>(ry[ky]) * w;
                        for (int kx = 0; kx < 3; ++kx) {
                            const size_t q = row + rx[kx];
                            const size_t wi =
                                ((static_cast<size_t>(o) * conv.in_ch + i) * 3 + ky) * 3 + kx;
                            gw[wi] += g * static_cast<double>(src[q]);
                            if (gi) gi[q] += static_cast<double>(conv.w[wi]) * g;
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

template <typename T>
struct BackwardResult {
    double loss = 0.0;
    BasicWeightHead<T> grads;
};

// Loss and exact analytic parameter gradients for one sample. The chain runs
// loss -> blended image -> weight maps (blend is linear in them) -> softmax
// Jacobian -> conv2 -> ReLU gate -> conv1. Pixel-field gradients are carried
// in 64-bit regardless of T.
template <typename T>
BackwardResult<T> backward_with_stack(const BasicImage<T>& input,
                                      const BasicDepthMap<T>& depth,
                                      const BasicImage<T>& target,
                                      std::span<const BasicImage<T>> smoothed,
                                      const BasicWeightHead<T>& head, LossKind loss,
                                      int threads = 1) {
    HeadTrace<T> trace;
    BasicLogits<T> logits = head_forward(input, depth, head, threads, &trace);
    BasicWeightMaps<T> wmaps = spatial_softmax(logits, threads);
    BasicImage<T> pred = blend(input, smoothed, wmaps, threads);

    BackwardResult<T> res;
    res.loss = loss_value(loss, pred, target);
    res.grads = BasicWeightHead<T>(head.levels());

    std::vector<double> u;
    detail::loss_grad(loss, pred, target, u);

    const size_t plane = wmaps.plane_size();
    const int levels = wmaps.levels;
    std::vector<double> gw(plane * levels, 0.0);
    for (int c = 0; c < input.channels; ++c) {
        const double* uc = u.data() + plane * c;
        const T* orig = input.plane(c);
        double* gw0 = gw.data();
        for (size_t p = 0; p < plane; ++p) gw0[p] += uc[p] * static_cast<double>(orig[p]);
        for (int i = 1; i < levels; ++i) {
            const T* sp = smoothed[i - 1].plane(c);
            double* gwi = gw.data() + plane * i;
            for (size_t p = 0; p < plane; ++p) gwi[p] += uc[p] * static_cast<double>(sp[p]);
        }
    }

    std::vector<double> gz(plane * levels);
    for (size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (int i = 0; i < levels; ++i)
            dot += gw[plane * i + p] * static_cast<double>(wmaps.values[plane * i + p]);
        for (int i = 0; i < levels; ++i) {
            double wi = wmaps.values[plane * i + p];
            gz[plane * i + p] = wi * (gw[plane * i + p] - dot);
        }
    }

    std::vector<double> gact1, g2w, g2b;
    detail::conv3x3_backward(trace.act1, head.conv2, gz, &gact1, g2w, g2b);

    for (size_t i = 0; i < gact1.size(); ++i)
        if (!(trace.pre1.values[i] > T(0))) gact1[i] = 0.0;

    std::vector<double> g1w, g1b;
    detail::conv3x3_backward(trace.input, head.conv1, gact1, nullptr, g1w, g1b);

    for (size_t i = 0; i < g1w.size(); ++i) res.grads.conv1.w[i] = static_cast<T>(g1w[i]);
    for (size_t i = 0; i < g1b.size(); ++i) res.grads.conv1.b[i] = static_cast<T>(g1b[i]);
    for (size_t i = 0; i < g2w.size(); ++i) res.grads.conv2.w[i] = static_cast<T>(g2w[i]);
    for (size_t i = 0; i < g2b.size(); ++i) res.grads.conv2.b[i] = static_cast<T>(g2b[i]);
    return res;
}

template <typename T>
BackwardResult<T> backward(const BasicSamplePair<T>& sample, const BasicWeightHead<T>& head,
                           std::span<const int> sizes, LossKind loss, int threads = 1) {
    check_sample(sample);
    if (head.levels() != static_cast<int>(sizes.size()) + 1)
        fail(ErrorCode::shape_mismatch, "backward: head levels do not match kernel count");
    std::vector<BasicImage<T>> smoothed = blur_stack(sample.input, sizes, threads);
    return backward_with_stack(sample.input, sample.depth, sample.target,
                               std::span<const BasicImage<T>>(smoothed), head, loss, threads);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

inline void check_hyper(const AdamHyper& h) {
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0) || !(h.beta2 >= 0.0 && h.beta2 < 1.0))
        fail(ErrorCode::invalid_argument, "adam betas must lie in [0,1)");
    if (!(h.epsilon > 0.0))
        fail(ErrorCode::invalid_argument, "adam epsilon must be positive");
    if (!(h.learning_rate > 0.0))
        fail(ErrorCode::invalid_argument, "learning rate must be positive");
}

inline void adam_step(WeightHead& head, const WeightHead& grads, AdamState& state,
                      const AdamHyper& hyper) {
    check_hyper(hyper);
    if (grads.levels() != head.levels() || state.m.levels() != head.levels() ||
        state.v.levels() != head.levels())
        fail(ErrorCode::shape_mismatch, "adam_step: parameter shapes differ");
    state.step += 1;
    const double corr1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double corr2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    auto ht = param_tensors(head);
    auto gt = param_tensors(grads);
    auto mt = param_tensors(state.m);
    auto vt = param_tensors(state.v);
    for (int t = 0; t < 4; ++t) {
        auto& pv = *ht[t];
        const auto& gv = *gt[t];
        auto& mv = *mt[t];
        auto& vv = *vt[t];
        for (size_t i = 0; i < pv.size(); ++i) {
            const double g = gv[i];
            const double m = hyper.beta1 * mv[i] + (1.0 - hyper.beta1) * g;
            const double v = hyper.beta2 * vv[i] + (1.0 - hyper.beta2) * g * g;
            mv[i] = static_cast<float>(m);
            vv[i] = static_cast<float>(v);
            const double mhat = m / corr1;
            const double vhat = v / corr2;
            pv[i] = static_cast<float>(pv[i] - hyper.learning_rate * mhat /
                                                   (std::sqrt(vhat) + hyper.epsilon));
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0.0;
    size_t worst_param = 0;
    size_t checked = 0;
    size_t skipped = 0; // params whose difference interval straddles a kink
};

namespace detail {

// Loss plus a signature of every non-smooth decision the evaluation made
// (ReLU input signs; residual signs under L1). If the signature changes
// between the two points of a central difference, that difference straddles
// a kink and estimates no derivative.
template <typename T>
double forward_loss_sig(const BasicImage<T>& input, const BasicDepthMap<T>& depth,
                        const BasicImage<T>& target,
                        std::span<const BasicImage<T>> smoothed,
                        const BasicWeightHead<T>& head, LossKind loss,
                        std::vector<signed char>* sig) {
    HeadTrace<T> trace;
    BasicLogits<T> logits = head_forward(input, depth, head, 1, &trace);
    BasicWeightMaps<T> wmaps = spatial_softmax(logits, 1);
    BasicImage<T> pred = blend(input, smoothed, wmaps, 1);
    if (sig) {
        sig->clear();
        sig->reserve(trace.pre1.values.size() +
                     (loss == LossKind::l1 ? pred.data.size() : 0));
        for (T v : trace.pre1.values)
            sig->push_back(v > T(0) ? 1 : (v < T(0) ? -1 : 0));
        if (loss == LossKind::l1)
            for (size_t i = 0; i < pred.data.size(); ++i) {
                double d = static_cast<double>(pred.data[i]) -
                           static_cast<double>(target.data[i]);
                sig->push_back(d > 0.0 ? 1 : (d < 0.0 ? -1 : 0));
            }
    }
    return loss_value(loss, pred, target);
}

} // namespace detail

// Central-difference check of the analytic gradient, on a 64-bit shadow of
// the head and sample. Params whose +/-h evaluations land on different sides
// of a kink are reported in `skipped` rather than polluting the error: a
// finite difference across a kink does not estimate the derivative.
// `mutate_index` (if set) doubles that analytic gradient entry first, for
// harness self-tests.
inline GradCheckResult grad_check(const SamplePair& sample, const WeightHead& head,
                                  std::span<const int> sizes, LossKind loss,
                                  size_t mutate_index = static_cast<size_t>(-1),
                                  double h = 1e-4) {
    check_sample(sample);
    BasicSamplePair<double> s = convert_sample<double>(sample);
    BasicWeightHead<double> hd = convert_head<double>(head);
    std::vector<BasicImage<double>> smoothed = blur_stack(s.input, sizes, 1);
    const std::span<const BasicImage<double>> stack(smoothed);

    BackwardResult<double> analytic =
        backward_with_stack(s.input, s.depth, s.target, stack, hd, loss, 1);
    if (mutate_index != static_cast<size_t>(-1))
        param_at(analytic.grads, mutate_index) *= 2.0;

    GradCheckResult out;
    auto pt = param_tensors(hd);
    auto gt = param_tensors(analytic.grads);
    std::vector<signed char> sig_plus, sig_minus;
    size_t flat = 0;
    for (int t = 0; t < 4; ++t) {
        auto& pv = *pt[t];
        const auto& gv = *gt[t];
        for (size_t i = 0; i < pv.size(); ++i, ++flat) {
            const double orig = pv[i];
            pv[i] = orig + h;
            double lp = detail::forward_loss_sig(s.input, s.depth, s.target, stack, hd,
                                                 loss, &sig_plus);
            pv[i] = orig - h;
            double lm = detail::forward_loss_sig(s.input, s.depth, s.target, stack, hd,
                                                 loss, &sig_minus);
            pv[i] = orig;
            if (sig_plus != sig_minus) {
                out.skipped += 1;
                continue;
            }
            const double cd = (lp - lm) / (2.0 * h);
            const double a = gv[i];
            const double rel =
                std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst_param = flat;
            }
            out.checked += 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Phase schedule
// ---------------------------------------------------------------------------

struct PhaseReport {
    int id = 0;
    LossKind loss = LossKind::l1;
    int iterations = 0;
    double final_loss = 0.0; // mean phase loss over the resized training set
};

inline void check_phase(const PhaseConfig& ph) {
    if (ph.id < 1 || ph.id > 3)
        fail(ErrorCode::invalid_argument, "phase id must be 1, 2 or 3");
    if (ph.train_w < 1 || ph.train_h < 1)
        fail(ErrorCode::invalid_argument, "phase dims must be positive");
    if (ph.iterations < 0)
        fail(ErrorCode::invalid_argument, "phase iterations must be >= 0");
    if (!(ph.lr_start > 0.0) || !(ph.lr_end > 0.0))
        fail(ErrorCode::invalid_argument, "phase learning rates must be positive");
    if (ph.loss == LossKind::neg_ssim &&
        (ph.train_w < detail::ssim_window_size || ph.train_h < detail::ssim_window_size))
        fail(ErrorCode::invalid_argument, "ssim phase dims must be at least 11x11");
}

// Geometric decay from lr_start to lr_end over the phase; the last iteration
// uses exactly lr_end.
inline double phase_lr(const PhaseConfig& ph, int t) {
    if (ph.iterations <= 1 || ph.lr_start == ph.lr_end) return ph.lr_start;
    const double r = ph.lr_end / ph.lr_start;
    return ph.lr_start * std::pow(r, static_cast<double>(t) / (ph.iterations - 1));
}

namespace detail {

inline void shuffle_indices(std::vector<size_t>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.next_below(i)]);
}

inline SamplePair flip_sample(const SamplePair& s, Axis axis) {
    return {flip(s.input, axis), flip(s.depth, axis), flip(s.target, axis)};
}

} // namespace detail

// Runs the configured phases over the dataset: per phase, pairs are resized
// to the phase dims, tripled by horizontal and vertical flips, and visited
// in seeded shuffled order with single-sample Adam steps and geometric lr
// decay. The optimizer restarts fresh each phase. Deterministic for a fixed
// seed and thread count.
inline WeightHead train_phases(std::span<const SamplePair> dataset,
                               std::span<const PhaseConfig> phases,
                               std::span<const int> sizes, uint64_t seed,
                               int threads = 1,
                               std::vector<PhaseReport>* reports = nullptr,
                               AdamState* final_state = nullptr) {
    if (dataset.empty())
        fail(ErrorCode::invalid_argument, "train_phases: empty dataset");
    for (const auto& s : dataset) check_sample(s);
    for (const auto& ph : phases) check_phase(ph);

    const int levels = static_cast<int>(sizes.size()) + 1;
    WeightHead head = head_init(levels, seed);
    Rng order_rng(seed ^ 0x6f4a7c159e3779b9ULL); // stream distinct from head_init
    AdamState state(levels);
    AdamHyper hyper;

    for (const PhaseConfig& ph : phases) {
        std::vector<SamplePair> resized(dataset.size());
        for (size_t i = 0; i < dataset.size(); ++i) {
            resized[i].input = resize_bilinear(dataset[i].input, ph.train_w, ph.train_h);
            resized[i].depth = resize_bilinear(dataset[i].depth, ph.train_w, ph.train_h);
            resized[i].target = resize_bilinear(dataset[i].target, ph.train_w, ph.train_h);
        }

        state = AdamState(levels);
        const size_t pool = resized.size() * 3;
        std::vector<size_t> order(pool);
        for (size_t i = 0; i < pool; ++i) order[i] = i;
        size_t pos = pool;

        for (int t = 0; t < ph.iterations; ++t) {
            if (pos == pool) {
                detail::shuffle_indices(order, order_rng);
                pos = 0;
            }
            const size_t idx = order[pos++];
            const SamplePair& base = resized[idx / 3];
            const int aug = static_cast<int>(idx % 3);
            hyper.learning_rate = phase_lr(ph, t);
            BackwardResult<float> res =
                aug == 0 ? backward(base, head, sizes, ph.loss, threads)
                         : backward(detail::flip_sample(base, aug == 1 ? Axis::horizontal
                                                                       : Axis::vertical),
                                    head, sizes, ph.loss, threads);
            adam_step(head, res.grads, state, hyper);
        }

        if (reports) {
            double total = 0.0;
            for (const auto& s : resized)
                total += loss_value(ph.loss,
                                    head_render(s.input, s.depth, head, sizes, threads),
                                    s.target);
            reports->push_back(
                {ph.id, ph.loss, ph.iterations, total / static_cast<double>(resized.size())});
        }
    }
    if (final_state) *final_state = state;
    return head;
}

// ---------------------------------------------------------------------------
// Phase config files: lines of "phaseN.key = value", '#' comments. Phases
// not mentioned do not run; an empty file selects the three defaults.
// Keys: width, height, loss (l1|ssim), iterations, lr_start, lr_end.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim_ws(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace detail

inline std::vector<PhaseConfig> parse_phase_config(const std::string& text) {
    std::map<int, PhaseConfig> byid;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (size_t hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = detail::trim_ws(raw);
        if (line.empty()) continue;
        auto bad = [&](const std::string& msg) -> void {
            fail(ErrorCode::malformed_config,
                 "phase config line " + std::to_string(line_no) + ": " + msg);
        };
        const size_t eq = line.find('=');
        if (eq == std::string::npos) bad("expected key = value");
        const std::string key = detail::trim_ws(line.substr(0, eq));
        const std::string value = detail::trim_ws(line.substr(eq + 1));
        const size_t dot = key.find('.');
        if (key.rfind("phase", 0) != 0 || dot == std::string::npos)
            bad("keys must look like phaseN.field");
        int id = 0;
        {
            const std::string num = key.substr(5, dot - 5);
            char* end = nullptr;
            long n = std::strtol(num.c_str(), &end, 10);
            if (num.empty() || *end != '\0' || n < 1 || n > 3)
                bad("phase id must be 1, 2 or 3");
            id = static_cast<int>(n);
        }
        const std::string field = key.substr(dot + 1);
        PhaseConfig& ph = byid.try_emplace(id, default_phase(id)).first->second;
        auto as_int = [&](long lo) -> int {
            char* end = nullptr;
            long n = std::strtol(value.c_str(), &end, 10);
            if (value.empty() || *end != '\0' || n < lo || n > 1000000000L)
                bad("bad integer value '" + value + "'");
            return static_cast<int>(n);
        };
        auto as_real = [&]() -> double {
            char* end = nullptr;
            double d = std::strtod(value.c_str(), &end);
            if (value.empty() || *end != '\0' || !(d > 0.0) || !std::isfinite(d))
                bad("bad positive real value '" + value + "'");
            return d;
        };
        if (field == "width")
            ph.train_w = as_int(1);
        else if (field == "height")
            ph.train_h = as_int(1);
        else if (field == "iterations")
            ph.iterations = as_int(0);
        else if (field == "lr_start")
            ph.lr_start = as_real();
        else if (field == "lr_end")
            ph.lr_end = as_real();
        else if (field == "loss") {
            if (value == "l1")
                ph.loss = LossKind::l1;
            else if (value == "ssim")
                ph.loss = LossKind::neg_ssim;
            else
                bad("loss must be 'l1' or 'ssim'");
        } else
            bad("unknown field '" + field + "'");
    }
    std::vector<PhaseConfig> out;
    if (byid.empty()) return default_phases();
    for (auto& [id, ph] : byid) {
        check_phase(ph);
        out.push_back(ph);
    }
    return out;
}

inline std::vector<PhaseConfig> load_phase_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorCode::file_unreadable, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_phase_config(ss.str());
}

// ---------------------------------------------------------------------------
// Checkpoints: the weight-head payload followed by the optimizer state
// (u32 step, then m and v in the same tensor layout as the head).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_state_tensors(std::FILE* f, const WeightHead& h) {
    const uint32_t levels = static_cast<uint32_t>(h.levels());
    const uint32_t hidden = WeightHead::hidden_channels;
    const uint32_t in_ch = WeightHead::input_channels;
    write_tensor(f, h.conv1.w, {hidden, in_ch, 3, 3});
    write_tensor(f, h.conv1.b, {hidden});
    write_tensor(f, h.conv2.w, {levels, hidden, 3, 3});
    write_tensor(f, h.conv2.b, {levels});
}

inline void read_state_tensors(std::FILE* f, WeightHead& h, const std::string& path) {
    const uint32_t levels = static_cast<uint32_t>(h.levels());
    const uint32_t hidden = WeightHead::hidden_channels;
    const uint32_t in_ch = WeightHead::input_channels;
    read_tensor(f, h.conv1.w, {hidden, in_ch, 3, 3}, path);
    read_tensor(f, h.conv1.b, {hidden}, path);
    read_tensor(f, h.conv2.w, {levels, hidden, 3, 3}, path);
    read_tensor(f, h.conv2.b, {levels}, path);
}

} // namespace detail

inline void save_checkpoint(const WeightHead& head, const AdamState& state,
                            const std::string& path) {
    if (state.m.levels() != head.levels() || state.v.levels() != head.levels())
        fail(ErrorCode::shape_mismatch, "save_checkpoint: state shapes differ from head");
    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f)
        fail(ErrorCode::file_unwritable, "cannot open " + path + " for writing");
    detail::write_head_payload(f.get(), head, path);
    detail::write_u32(f.get(), static_cast<uint32_t>(state.step));
    detail::write_state_tensors(f.get(), state.m);
    detail::write_state_tensors(f.get(), state.v);
    if (std::fflush(f.get()) != 0)
        fail(ErrorCode::file_unwritable, "short write to " + path);
}

inline WeightHead load_checkpoint(const std::string& path, AdamState* state = nullptr) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f)
        fail(ErrorCode::file_unreadable, "cannot open " + path);
    WeightHead head = detail::read_head_payload(f.get(), path);
    if (state) {
        uint32_t step = 0;
        if (!detail::read_u32(f.get(), step))
            fail(ErrorCode::unsupported_format, path + ": missing optimizer state");
        AdamState st(head.levels());
        st.step = step;
        detail::read_state_tensors(f.get(), st.m, path);
        detail::read_state_tensors(f.get(), st.v, path);
        *state = std::move(st);
    }
    return head;
}

} // namespace bokeh
