#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bokeh/blend.hpp"
#include "bokeh/blur.hpp"
#include "bokeh/error.hpp"
#include "bokeh/image.hpp"
#include "bokeh/image_io.hpp"
#include "bokeh/rng.hpp"
#include "bokeh/train.hpp"
#include "bokeh/weights.hpp"

namespace bokeh {

// A generated scene: a handful of cells with distinct depths, each carrying
// its own colors, a smooth wave and a few hard-edged disks (the disks give
// the smoothing levels something to visibly differ on).
struct SceneSpec {
    uint64_t seed = 0;
    int width = 64;
    int height = 64;
    int regions = 4;            // 2..6 cells
    std::vector<double> depths; // one per region, distinct, in [0,1];
                                // empty selects a shuffled even spread
    double focus_depth = 0.0;
};

struct Scene {
    Image image;
    DepthMap depth;
};

inline void check_scene_spec(const SceneSpec& spec) {
    if (spec.width < 2 || spec.height < 2)
        fail(ErrorCode::invalid_argument, "scene dims must be at least 2x2");
    if (spec.regions < 2 || spec.regions > 6)
        fail(ErrorCode::invalid_argument, "scene regions must be in 2..6");
    if (!spec.depths.empty()) {
        if (static_cast<int>(spec.depths.size()) != spec.regions)
            fail(ErrorCode::invalid_argument, "scene depths must match region count");
        for (size_t i = 0; i < spec.depths.size(); ++i) {
            if (!(spec.depths[i] >= 0.0 && spec.depths[i] <= 1.0))
                fail(ErrorCode::invalid_argument, "scene depths must lie in [0,1]");
            for (size_t j = 0; j < i; ++j)
                if (spec.depths[i] == spec.depths[j])
                    fail(ErrorCode::invalid_argument, "scene depths must be distinct");
        }
    }
    if (!(spec.focus_depth >= 0.0 && spec.focus_depth <= 1.0))
        fail(ErrorCode::invalid_argument, "focus depth must lie in [0,1]");
}

namespace detail {

struct SceneShape {
    int region;
    double cx, cy, r2;
    float color[3];
};

} // namespace detail

inline Scene gen_scene(const SceneSpec& spec) {
    check_scene_spec(spec);
    Rng rng(spec.seed);
    const int k = spec.regions;

    std::vector<double> sx(k), sy(k);
    for (int r = 0; r < k; ++r) {
        sx[r] = rng.next_range(0.0, spec.width);
        sy[r] = rng.next_range(0.0, spec.height);
    }

    std::vector<double> depths = spec.depths;
    if (depths.empty()) {
        depths.resize(k);
        for (int r = 0; r < k; ++r)
            depths[r] = k == 1 ? 0.0 : static_cast<double>(r) / (k - 1);
        for (size_t i = depths.size(); i > 1; --i)
            std::swap(depths[i - 1], depths[rng.next_below(i)]);
    }

    struct RegionTexture {
        double base[3];
        double amp[3];
        double ox, oy, phase;
    };
    std::vector<RegionTexture> tex(k);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < 3; ++c) tex[r].base[c] = rng.next_range(0.2, 0.8);
        for (int c = 0; c < 3; ++c) tex[r].amp[c] = rng.next_range(0.03, 0.12);
        tex[r].ox = two_pi * rng.next_range(2.0, 6.0) / spec.width;
        tex[r].oy = two_pi * rng.next_range(2.0, 6.0) / spec.height;
        tex[r].phase = rng.next_range(0.0, two_pi);
    }

    std::vector<detail::SceneShape> shapes;
    const double min_dim = std::min(spec.width, spec.height);
    for (int r = 0; r < k; ++r) {
        const int count = 1 + static_cast<int>(rng.next_below(2));
        for (int s = 0; s < count; ++s) {
            detail::SceneShape sh;
            sh.region = r;
            sh.cx = rng.next_range(0.0, spec.width);
            sh.cy = rng.next_range(0.0, spec.height);
            double rad = rng.next_range(0.06 * min_dim, 0.22 * min_dim);
            sh.r2 = rad * rad;
            for (int c = 0; c < 3; ++c)
                sh.color[c] = static_cast<float>(rng.next_range(0.1, 0.9));
            shapes.push_back(sh);
        }
    }

    Scene out{Image(spec.width, spec.height, 3), DepthMap(spec.width, spec.height)};
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            int region = 0;
            double best = 1e300;
            for (int r = 0; r < k; ++r) {
                double dx = x - sx[r], dy = y - sy[r];
                double d = dx * dx + dy * dy;
                if (d < best) {
                    best = d;
                    region = r;
                }
            }
            const RegionTexture& t = tex[region];
            const double wave = std::cos(t.ox * x + t.oy * y + t.phase);
            float px[3];
            for (int c = 0; c < 3; ++c)
                px[c] = static_cast<float>(t.base[c] + t.amp[c] * wave);
            for (const auto& sh : shapes) {
                if (sh.region != region) continue;
                double dx = x - sh.cx, dy = y - sh.cy;
                if (dx * dx + dy * dy <= sh.r2)
                    for (int c = 0; c < 3; ++c) px[c] = sh.color[c];
            }
            for (int c = 0; c < 3; ++c)
                out.image.at(c, y, x) = std::clamp(px[c], 0.0f, 1.0f);
            out.depth.at(y, x) = static_cast<float>(depths[region]);
        }
    }
    return out;
}

// Ground truth by construction: the hard-weight blend, so the target is
// exactly representable by the model family.
inline Image gen_bokeh_gt(const Image& img, const DepthMap& depth, const FocusParams& fp,
                          std::span<const int> sizes, int threads = 1) {
    return parametric_render(img, depth, sizes, fp, /*hard=*/true, threads);
}

inline SamplePair make_sample(const SceneSpec& spec, std::span<const int> sizes,
                              int threads = 1) {
    Scene scene = gen_scene(spec);
    FocusParams fp;
    fp.focus = spec.focus_depth;
    SamplePair s;
    s.target = gen_bokeh_gt(scene.image, scene.depth, fp, sizes, threads);
    s.input = std::move(scene.image);
    s.depth = std::move(scene.depth);
    return s;
}

// ---------------------------------------------------------------------------
// On-disk dataset: input/NNNN.png (8-bit), depth/NNNN.png (16-bit gray),
// target/NNNN.png (8-bit), manifest.json with the generation parameters.
// ---------------------------------------------------------------------------

struct DatasetParams {
    int count = 16;
    uint64_t seed = 1;
    int width = 64;
    int height = 64;
    int regions = 4;
    std::vector<int> kernels = {25, 45, 75};
    double focus = 0.0;
};

namespace detail {

inline std::string sample_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d.png", index);
    return buf;
}

} // namespace detail

// `written`, when given, records every file path as it is written so a
// caller can clean up after a partial failure.
inline void write_dataset(const std::string& dir, const DatasetParams& p, int threads = 1,
                          std::vector<std::string>* written = nullptr) {
    if (p.count < 1)
        fail(ErrorCode::invalid_argument, "dataset count must be >= 1");
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"input", "depth", "target"}) {
        fs::create_directories(fs::path(dir) / sub, ec);
        if (ec)
            fail(ErrorCode::file_unwritable, "cannot create " + (fs::path(dir) / sub).string());
    }
    auto record = [&](const std::string& path) {
        if (written) written->push_back(path);
        return path;
    };

    nlohmann::json manifest;
    manifest["count"] = p.count;
    manifest["width"] = p.width;
    manifest["height"] = p.height;
    manifest["kernels"] = p.kernels;
    manifest["focus"] = p.focus;
    manifest["scenes"] = nlohmann::json::array();

    for (int i = 0; i < p.count; ++i) {
        SceneSpec spec;
        spec.seed = p.seed + static_cast<uint64_t>(i);
        spec.width = p.width;
        spec.height = p.height;
        spec.regions = p.regions;
        spec.focus_depth = p.focus;
        Scene scene = gen_scene(spec);
        FocusParams fp;
        fp.focus = spec.focus_depth;
        Image target = gen_bokeh_gt(scene.image, scene.depth, fp, p.kernels, threads);

        const std::string name = detail::sample_name(i);
        save_image(scene.image, record((fs::path(dir) / "input" / name).string()));
        save_depth(scene.depth, record((fs::path(dir) / "depth" / name).string()));
        save_image(target, record((fs::path(dir) / "target" / name).string()));

        nlohmann::json entry;
        entry["file"] = name;
        entry["seed"] = spec.seed;
        entry["regions"] = spec.regions;
        entry["focus"] = spec.focus_depth;
        manifest["scenes"].push_back(entry);
    }

    const std::string manifest_path = record((fs::path(dir) / "manifest.json").string());
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out)
        fail(ErrorCode::file_unwritable, "cannot write " + manifest_path);
    out << manifest.dump(2) << "\n";
    if (!out.flush())
        fail(ErrorCode::file_unwritable, "short write to " + manifest_path);
}

// Loads the layout back as training pairs, in manifest order.
inline std::vector<SamplePair> load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in)
        fail(ErrorCode::file_unreadable, "cannot open " + manifest_path);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::malformed_dataset, manifest_path + ": " + e.what());
    }
    if (!manifest.contains("scenes") || !manifest["scenes"].is_array() ||
        manifest["scenes"].empty())
        fail(ErrorCode::malformed_dataset, manifest_path + ": no scenes listed");

    std::vector<SamplePair> out;
    for (const auto& entry : manifest["scenes"]) {
        if (!entry.contains("file") || !entry["file"].is_string())
            fail(ErrorCode::malformed_dataset, manifest_path + ": scene entry without file");
        const std::string name = entry["file"].get<std::string>();
        SamplePair s;
        s.input = load_image((fs::path(dir) / "input" / name).string());
        s.depth = load_depth((fs::path(dir) / "depth" / name).string());
        s.target = load_image((fs::path(dir) / "target" / name).string());
        try {
            check_sample(s);
        } catch (const Error& e) {
            fail(ErrorCode::malformed_dataset, dir + "/" + name + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace bokeh
