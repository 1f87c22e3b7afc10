#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "bokeh/bokeh.hpp"

namespace fs = std::filesystem;

namespace {

// Tracks files written by the running command so a failure part-way through
// leaves nothing behind.
struct OutputGuard {
    std::vector<std::string> paths;
    bool armed = true;

    void add(const std::string& p) { paths.push_back(p); }
    void dismiss() { armed = false; }
    ~OutputGuard() {
        if (!armed) return;
        for (const auto& p : paths) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
};

std::pair<int, int> parse_size(const std::string& s) {
    const size_t x = s.find('x');
    if (x == std::string::npos)
        bokeh::fail(bokeh::ErrorCode::invalid_argument,
                    "size must look like WxH, got '" + s + "'");
    char* end = nullptr;
    const long w = std::strtol(s.c_str(), &end, 10);
    if (end != s.c_str() + x)
        bokeh::fail(bokeh::ErrorCode::invalid_argument, "bad width in '" + s + "'");
    const long h = std::strtol(s.c_str() + x + 1, &end, 10);
    if (*end != '\0' || w < 1 || h < 1)
        bokeh::fail(bokeh::ErrorCode::invalid_argument, "bad size '" + s + "'");
    return {static_cast<int>(w), static_cast<int>(h)};
}

std::vector<int> parse_kernels(const std::string& s) {
    std::vector<int> sizes;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string item = s.substr(pos, comma - pos);
        char* end = nullptr;
        const long k = std::strtol(item.c_str(), &end, 10);
        if (item.empty() || *end != '\0' || k < 1)
            bokeh::fail(bokeh::ErrorCode::invalid_argument,
                        "bad kernel list '" + s + "'");
        sizes.push_back(static_cast<int>(k));
        pos = comma + 1;
    }
    return sizes;
}

struct RenderOpts {
    std::string input, depth, model, out, proc_size = "1024x768", dump_weights;
    std::string kernels = "25,45,75";
    double focus = 0.0, tau = 0.05;
    bool hard = false;
    int threads = 1;
};

int cmd_render(const RenderOpts& o) {
    const std::vector<int> sizes = parse_kernels(o.kernels);
    const auto [pw, ph] = parse_size(o.proc_size);
    const bokeh::Image input = bokeh::load_image(o.input);
    const bokeh::DepthMap depth = bokeh::load_depth(o.depth);

    const bokeh::Image proc = bokeh::resize_bilinear(input, pw, ph);
    const bokeh::DepthMap dproc = bokeh::resize_bilinear(depth, pw, ph);

    bokeh::WeightMaps weights;
    bokeh::Image rendered;
    if (!o.model.empty()) {
        const bokeh::WeightHead head = bokeh::load_head(o.model);
        if (head.levels() != static_cast<int>(sizes.size()) + 1)
            bokeh::fail(bokeh::ErrorCode::shape_mismatch,
                        "model has " + std::to_string(head.levels()) +
                            " levels but --kernels lists " +
                            std::to_string(sizes.size()) + " sizes");
        rendered = bokeh::head_render(proc, dproc, head, sizes, o.threads, &weights);
    } else {
        bokeh::FocusParams fp;
        fp.focus = o.focus;
        fp.tau = o.tau;
        rendered = bokeh::parametric_render(proc, dproc, sizes, fp, o.hard, o.threads,
                                            &weights);
    }

    OutputGuard guard;
    guard.add(o.out);
    bokeh::save_image(bokeh::resize_bilinear(rendered, input.width, input.height), o.out);
    if (!o.dump_weights.empty()) {
        std::error_code ec;
        fs::create_directories(o.dump_weights, ec);
        if (ec)
            bokeh::fail(bokeh::ErrorCode::file_unwritable,
                        "cannot create " + o.dump_weights);
        for (int i = 0; i < weights.levels; ++i) {
            const std::string path =
                (fs::path(o.dump_weights) / ("weight_" + std::to_string(i) + ".png"))
                    .string();
            guard.add(path);
            bokeh::save_image(bokeh::weight_plane_image(weights, i), path);
        }
    }
    guard.dismiss();
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

struct TrainOpts {
    std::string data, phases, out;
    std::string kernels = "25,45,75";
    uint64_t seed = 1;
    int threads = 1;
};

int cmd_train(const TrainOpts& o) {
    const std::vector<int> sizes = parse_kernels(o.kernels);
    const std::vector<bokeh::SamplePair> dataset = bokeh::load_dataset(o.data);
    const std::vector<bokeh::PhaseConfig> phases =
        o.phases.empty() ? bokeh::default_phases() : bokeh::load_phase_config(o.phases);

    std::vector<bokeh::PhaseReport> reports;
    bokeh::AdamState state;
    const bokeh::WeightHead head = bokeh::train_phases(
        dataset, phases, sizes, o.seed, o.threads, &reports, &state);

    OutputGuard guard;
    guard.add(o.out);
    bokeh::save_checkpoint(head, state, o.out);
    guard.dismiss();
    for (const auto& r : reports)
        std::printf("phase %d (%s): %d iterations, final loss %.6f\n", r.id,
                    bokeh::loss_name(r.loss).c_str(), r.iterations, r.final_loss);
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

struct EvalOpts {
    std::string pred, gt, csv;
    int threads = 1;
};

int cmd_eval(const EvalOpts& o) {
    auto list_pngs = [](const std::string& dir) {
        if (!fs::is_directory(dir))
            bokeh::fail(bokeh::ErrorCode::file_unreadable, dir + " is not a directory");
        std::vector<std::string> names;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".png")
                names.push_back(entry.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    };
    const std::vector<std::string> pred_names = list_pngs(o.pred);
    const std::vector<std::string> gt_names = list_pngs(o.gt);
    const std::set<std::string> pred_set(pred_names.begin(), pred_names.end());
    const std::set<std::string> gt_set(gt_names.begin(), gt_names.end());
    for (const auto& n : pred_names)
        if (!gt_set.count(n))
            bokeh::fail(bokeh::ErrorCode::invalid_argument,
                        o.gt + " has no counterpart for " + n);
    for (const auto& n : gt_names)
        if (!pred_set.count(n))
            bokeh::fail(bokeh::ErrorCode::invalid_argument,
                        o.pred + " has no counterpart for " + n);
    if (pred_names.empty())
        bokeh::fail(bokeh::ErrorCode::invalid_argument, o.pred + " holds no .png files");

    struct Row {
        std::string name;
        double psnr, ssim;
    };
    std::vector<Row> rows;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const auto& n : pred_names) {
        const bokeh::Image p = bokeh::load_image((fs::path(o.pred) / n).string());
        const bokeh::Image g = bokeh::load_image((fs::path(o.gt) / n).string());
        const double ps = bokeh::psnr(p, g);
        const double ss = bokeh::ssim(p, g);
        psnr_sum += ps;
        ssim_sum += ss;
        rows.push_back({n, ps, ss});
    }
    const double psnr_mean = psnr_sum / rows.size();
    const double ssim_mean = ssim_sum / rows.size();

    if (!o.csv.empty()) {
        OutputGuard guard;
        guard.add(o.csv);
        std::FILE* f = std::fopen(o.csv.c_str(), "wb");
        if (!f)
            bokeh::fail(bokeh::ErrorCode::file_unwritable, "cannot write " + o.csv);
        std::fprintf(f, "file,psnr,ssim\n");
        for (const auto& r : rows)
            std::fprintf(f, "%s,%.6f,%.6f\n", r.name.c_str(), r.psnr, r.ssim);
        std::fprintf(f, "mean,%.6f,%.6f\n", psnr_mean, ssim_mean);
        if (std::fclose(f) != 0)
            bokeh::fail(bokeh::ErrorCode::file_unwritable, "short write to " + o.csv);
        guard.dismiss();
    }
    std::printf("%zu images: mean psnr %.4f dB, mean ssim %.6f\n", rows.size(),
                psnr_mean, ssim_mean);
    return 0;
}

struct BenchOpts {
    std::string size = "1024x1536";
    std::string kernels = "25,45,75";
    int iters = 5;
    int threads = 1;
};

int cmd_bench(const BenchOpts& o) {
    const auto [w, h] = parse_size(o.size);
    const std::vector<int> sizes = parse_kernels(o.kernels);
    const bokeh::BenchResult res =
        bokeh::run_render_benchmark(w, h, o.iters, o.threads, sizes);
    for (size_t i = 0; i < res.run_seconds.size(); ++i)
        std::printf("run %zu: %.4f s\n", i + 1, res.run_seconds[i]);
    const double mpix = static_cast<double>(w) * h / 1e6;
    std::printf("median %.4f s for %dx%d, %d thread(s), %.2f Mpix/s\n",
                res.median_seconds, w, h, o.threads, mpix / res.median_seconds);
    return 0;
}

struct SynthOpts {
    std::string out;
    std::string size = "64x64";
    std::string kernels = "25,45,75";
    int count = 16;
    uint64_t seed = 1;
    int regions = 4;
    double focus = 0.0;
    int threads = 1;
};

int cmd_synth(const SynthOpts& o) {
    const auto [w, h] = parse_size(o.size);
    bokeh::DatasetParams p;
    p.count = o.count;
    p.seed = o.seed;
    p.width = w;
    p.height = h;
    p.regions = o.regions;
    p.kernels = parse_kernels(o.kernels);
    p.focus = o.focus;
    OutputGuard guard;
    std::vector<std::string> written;
    try {
        bokeh::write_dataset(o.out, p, o.threads, &written);
    } catch (...) {
        guard.paths = written;
        throw;
    }
    guard.dismiss();
    std::printf("wrote %d scenes to %s\n", p.count, o.out.c_str());
    return 0;
}

struct BaselineOpts {
    std::string input, saliency, out;
    int threads = 1;
};

int cmd_baseline(const BaselineOpts& o) {
    const bokeh::Image input = bokeh::load_image(o.input);
    const bokeh::Image sal = o.saliency.empty()
                                 ? bokeh::center_prior_saliency(input.width, input.height)
                                 : bokeh::load_image(o.saliency);
    const bokeh::Image out = bokeh::saliency_bokeh(input, sal, o.threads);
    OutputGuard guard;
    guard.add(o.out);
    bokeh::save_image(out, o.out);
    guard.dismiss();
    std::printf("wrote %s\n", o.out.c_str());
    return 0;
}

void add_threads(CLI::App* cmd, int& threads) {
    cmd->add_option("--threads", threads, "worker threads (default 1)")
        ->check(CLI::Range(1, 256));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"depth-aware bokeh rendering engine"};
    app.require_subcommand(1);

    RenderOpts render;
    CLI::App* render_cmd =
        app.add_subcommand("render", "blend an image with its smoothed versions");
    render_cmd->add_option("--input", render.input, "input image (png/pnm)")->required();
    render_cmd->add_option("--depth", render.depth, "depth map image")->required();
    render_cmd->add_option("--model", render.model, "trained weight head (else parametric)");
    render_cmd->add_option("--out", render.out, "output png")->required();
    render_cmd->add_option("--kernels", render.kernels, "comma list of kernel sizes");
    render_cmd->add_option("--focus", render.focus, "in-focus depth value in [0,1]");
    render_cmd->add_option("--tau", render.tau, "softness of the level assignment");
    render_cmd->add_flag("--hard", render.hard, "one-hot weights instead of softmax");
    render_cmd->add_option("--proc-size", render.proc_size,
                           "processing resolution WxH (default 1024x768)");
    render_cmd->add_option("--dump-weights", render.dump_weights,
                           "directory for per-level weight pngs");
    add_threads(render_cmd, render.threads);

    TrainOpts train;
    CLI::App* train_cmd = app.add_subcommand("train", "fit the weight head");
    train_cmd->add_option("--data", train.data, "dataset directory (synth layout)")
        ->required();
    train_cmd->add_option("--phases", train.phases, "phase config file");
    train_cmd->add_option("--seed", train.seed, "training seed");
    train_cmd->add_option("--out", train.out, "checkpoint path")->required();
    train_cmd->add_option("--kernels", train.kernels, "comma list of kernel sizes");
    add_threads(train_cmd, train.threads);

    EvalOpts eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "psnr/ssim over paired directories");
    eval_cmd->add_option("--pred", eval.pred, "predictions directory")->required();
    eval_cmd->add_option("--gt", eval.gt, "ground-truth directory")->required();
    eval_cmd->add_option("--csv", eval.csv, "csv report path");
    add_threads(eval_cmd, eval.threads);

    BenchOpts bench;
    CLI::App* bench_cmd = app.add_subcommand("bench", "time the render path");
    bench_cmd->add_option("--size", bench.size, "image size WxH (default 1024x1536)");
    bench_cmd->add_option("--iters", bench.iters, "timed repetitions")
        ->check(CLI::Range(1, 1000));
    bench_cmd->add_option("--kernels", bench.kernels, "comma list of kernel sizes");
    add_threads(bench_cmd, bench.threads);

    SynthOpts synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--count", synth.count, "number of scenes")
        ->check(CLI::Range(1, 100000));
    synth_cmd->add_option("--seed", synth.seed, "generation seed");
    synth_cmd->add_option("--size", synth.size, "scene size WxH (default 64x64)");
    synth_cmd->add_option("--regions", synth.regions, "depth layers per scene (2..6)");
    synth_cmd->add_option("--kernels", synth.kernels, "comma list of kernel sizes");
    synth_cmd->add_option("--focus", synth.focus, "in-focus depth value");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    add_threads(synth_cmd, synth.threads);

    BaselineOpts baseline;
    CLI::App* baseline_cmd =
        app.add_subcommand("baseline", "saliency composite against the 75-tap blur");
    baseline_cmd->add_option("--input", baseline.input, "input image")->required();
    baseline_cmd->add_option("--saliency", baseline.saliency,
                             "grayscale saliency map (default: center prior)");
    baseline_cmd->add_option("--out", baseline.out, "output png")->required();
    add_threads(baseline_cmd, baseline.threads);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*render_cmd) return cmd_render(render);
        if (*train_cmd) return cmd_train(train);
        if (*eval_cmd) return cmd_eval(eval);
        if (*bench_cmd) return cmd_bench(bench);
        if (*synth_cmd) return cmd_synth(synth);
        if (*baseline_cmd) return cmd_baseline(baseline);
    } catch (const bokeh::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
