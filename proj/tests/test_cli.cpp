#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "bokeh/bokeh.hpp"
#include "test_util.hpp"

using namespace bokeh;
using testutil::TempDir;

namespace {

namespace fs = std::filesystem;

struct CmdResult {
    int status = -1;
    std::string out, err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

CmdResult run_cli(const TempDir& tmp, const std::string& args) {
    static std::atomic<int> counter{0};
    const int n = counter.fetch_add(1);
    const fs::path out_path = tmp.path() / ("stdout_" + std::to_string(n) + ".txt");
    const fs::path err_path = tmp.path() / ("stderr_" + std::to_string(n) + ".txt");
    const std::string cmd = std::string(CLI_PATH) + " " + args + " >'" +
                            out_path.string() + "' 2>'" + err_path.string() + "'";
    const int rc = std::system(cmd.c_str());
    CmdResult r;
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

float quantized8(double v) {
    return static_cast<float>(std::lround(v * 255.0)) * (1.0f / 255.0f);
}

int regular_file_count(const fs::path& root) {
    int n = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) ++n;
    return n;
}

} // namespace

TEST(Cli, NoSubcommandFails) {
    TempDir tmp;
    EXPECT_NE(run_cli(tmp, "").status, 0);
}

TEST(Cli, HelpListsSubcommands) {
    TempDir tmp;
    CmdResult r = run_cli(tmp, "--help");
    EXPECT_EQ(r.status, 0);
    for (const char* name : {"render", "train", "eval", "bench", "synth", "baseline"})
        EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST(CliSynth, WritesTheLayoutAndReportsIt) {
    TempDir tmp;
    CmdResult r = run_cli(tmp, "synth --count 3 --seed 5 --size 24x24 --kernels 9,17 --out '" +
                                   tmp.str("ds") + "'");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("wrote 3 scenes"), std::string::npos);
    for (const char* sub : {"input", "depth", "target"})
        for (const char* name : {"0000.png", "0001.png", "0002.png"})
            EXPECT_TRUE(fs::exists(tmp.path() / "ds" / sub / name)) << sub << "/" << name;
    EXPECT_TRUE(fs::exists(tmp.path() / "ds" / "manifest.json"));
}

TEST(CliSynth, SameSeedSameBytes) {
    TempDir tmp;
    const std::string args = "synth --count 2 --seed 8 --size 24x24 --kernels 9 --out '";
    ASSERT_EQ(run_cli(tmp, args + tmp.str("a") + "'").status, 0);
    ASSERT_EQ(run_cli(tmp, args + tmp.str("b") + "'").status, 0);
    for (const char* rel :
         {"input/0000.png", "depth/0000.png", "target/0001.png", "manifest.json"})
        EXPECT_TRUE(same_bytes(tmp.path() / "a" / rel, tmp.path() / "b" / rel)) << rel;
}

TEST(CliRender, HardFocusAtNativeSizeReturnsTheInput) {
    TempDir tmp;
    Image input = testutil::grid_image(40, 30, 3, 300);
    save_image(input, tmp.str("in.png"));
    save_depth(DepthMap(40, 30, 0.4f), tmp.str("depth.png"));

    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("in.png") + "' --depth '" +
                                   tmp.str("depth.png") +
                                   "' --out '" + tmp.str("out.png") +
                                   "' --kernels 9,17 --focus 0.4 --hard "
                                   "--proc-size 40x30");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("wrote"), std::string::npos);
    Image out = load_image(tmp.str("out.png"));
    EXPECT_EQ(out.data, load_image(tmp.str("in.png")).data);
}

TEST(CliRender, SoftRenderMatchesTheLibrary) {
    TempDir tmp;
    save_image(testutil::grid_image(32, 24, 3, 301), tmp.str("in.png"));
    DepthMap depth = testutil::random_depth(32, 24, 302);
    save_depth(depth, tmp.str("depth.png"));

    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("in.png") + "' --depth '" +
                                   tmp.str("depth.png") + "' --out '" +
                                   tmp.str("out.png") +
                                   "' --kernels 9,17 --focus 0.35 --tau 0.05 "
                                   "--proc-size 32x24");
    ASSERT_EQ(r.status, 0) << r.err;

    const Image in = load_image(tmp.str("in.png"));
    const DepthMap d = load_depth(tmp.str("depth.png"));
    FocusParams fp;
    fp.focus = 0.35;
    fp.tau = 0.05;
    const std::vector<int> sizes = {9, 17};
    const Image expected = parametric_render(in, d, sizes, fp, false, 1);
    const Image out = load_image(tmp.str("out.png"));
    ASSERT_TRUE(out.same_shape(expected));
    for (size_t i = 0; i < out.data.size(); ++i)
        ASSERT_EQ(out.data[i], quantized8(expected.data[i])) << i;
}

TEST(CliRender, DefaultProcSizeIs1024x768) {
    TempDir tmp;
    save_image(testutil::grid_image(32, 24, 3, 303), tmp.str("in.png"));
    save_depth(testutil::random_depth(32, 24, 304), tmp.str("depth.png"));
    const std::string base = "render --input '" + tmp.str("in.png") + "' --depth '" +
                             tmp.str("depth.png") + "' --focus 0.5 --out '";
    ASSERT_EQ(run_cli(tmp, base + tmp.str("a.png") + "'").status, 0);
    ASSERT_EQ(run_cli(tmp, base + tmp.str("b.png") + "' --proc-size 1024x768").status, 0);
    EXPECT_TRUE(same_bytes(tmp.path() / "a.png", tmp.path() / "b.png"));
}

TEST(CliRender, DumpsNormalizedWeightPlanes) {
    TempDir tmp;
    save_image(testutil::grid_image(40, 30, 3, 305), tmp.str("in.png"));
    save_depth(testutil::random_depth(40, 30, 306), tmp.str("depth.png"));
    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("in.png") + "' --depth '" +
                                   tmp.str("depth.png") + "' --out '" +
                                   tmp.str("out.png") +
                                   "' --kernels 9,17 --proc-size 40x30 "
                                   "--dump-weights '" +
                                   tmp.str("w") + "'");
    ASSERT_EQ(r.status, 0) << r.err;

    std::vector<Image> planes;
    for (int i = 0; i < 3; ++i) {
        const std::string path = tmp.str("w/weight_" + std::to_string(i) + ".png");
        ASSERT_TRUE(fs::exists(path)) << path;
        planes.push_back(load_image(path));
        ASSERT_EQ(planes.back().channels, 1);
    }
    // stored planes are 8-bit, so per-pixel sums hold to quantization error
    for (size_t p = 0; p < planes[0].data.size(); ++p) {
        const double sum = static_cast<double>(planes[0].data[p]) + planes[1].data[p] +
                           planes[2].data[p];
        ASSERT_NEAR(sum, 1.0, 2.0 / 255.0) << p;
    }
}

TEST(CliRender, FailureRemovesTheOutput) {
    TempDir tmp;
    save_image(testutil::grid_image(40, 30, 3, 307), tmp.str("in.png"));
    save_depth(DepthMap(40, 30, 0.2f), tmp.str("depth.png"));
    std::ofstream(tmp.str("blocker.txt")) << "x";

    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("in.png") + "' --depth '" +
                                   tmp.str("depth.png") + "' --out '" +
                                   tmp.str("out.png") +
                                   "' --kernels 9,17 --proc-size 40x30 "
                                   "--dump-weights '" +
                                   tmp.str("blocker.txt/w") + "'");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_FALSE(fs::exists(tmp.str("out.png")));
}

TEST(CliRender, MissingInputFailsCleanly) {
    TempDir tmp;
    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("nowhere.png") +
                                   "' --depth '" + tmp.str("nowhere.png") +
                                   "' --out '" + tmp.str("out.png") + "'");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_FALSE(fs::exists(tmp.str("out.png")));
}

TEST(CliSynth, FailureLeavesNoFiles) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "ds" / "target" / "0001.png");
    CmdResult r = run_cli(tmp, "synth --count 2 --seed 5 --size 24x24 --kernels 9 --out '" +
                                   tmp.str("ds") + "'");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_EQ(regular_file_count(tmp.path() / "ds"), 0);
}

TEST(CliTrain, ZeroIterationsYieldsTheInitialHead) {
    TempDir tmp;
    ASSERT_EQ(run_cli(tmp, "synth --count 2 --seed 6 --size 16x16 --kernels 9,17 --out '" +
                               tmp.str("ds") + "'")
                  .status,
              0);
    std::ofstream cfg(tmp.str("phases.conf"));
    cfg << "phase1.width = 16\nphase1.height = 16\nphase1.loss = l1\n"
           "phase1.iterations = 0\nphase1.lr_start = 1e-3\nphase1.lr_end = 1e-4\n";
    cfg.close();

    CmdResult r = run_cli(tmp, "train --data '" + tmp.str("ds") + "' --phases '" +
                                   tmp.str("phases.conf") +
                                   "' --kernels 9,17 --seed 77 --out '" +
                                   tmp.str("model.ckpt") + "'");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("phase 1 (l1): 0 iterations"), std::string::npos) << r.out;

    const WeightHead trained = load_checkpoint(tmp.str("model.ckpt"));
    const WeightHead fresh = head_init(3, 77);
    const auto a = param_tensors(trained);
    const auto b = param_tensors(fresh);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
}

TEST(CliTrain, SameSeedSameCheckpoint) {
    TempDir tmp;
    ASSERT_EQ(run_cli(tmp, "synth --count 3 --seed 7 --size 16x16 --kernels 9,17 --out '" +
                               tmp.str("ds") + "'")
                  .status,
              0);
    std::ofstream cfg(tmp.str("phases.conf"));
    cfg << "phase1.width = 16\nphase1.height = 16\nphase1.loss = l1\n"
           "phase1.iterations = 5\nphase1.lr_start = 1e-3\nphase1.lr_end = 1e-4\n";
    cfg.close();

    const std::string base = "train --data '" + tmp.str("ds") + "' --phases '" +
                             tmp.str("phases.conf") + "' --kernels 9,17 --seed 42 --out '";
    CmdResult r1 = run_cli(tmp, base + tmp.str("m1.ckpt") + "'");
    ASSERT_EQ(r1.status, 0) << r1.err;
    EXPECT_NE(r1.out.find("phase 1 (l1): 5 iterations, final loss"), std::string::npos);
    EXPECT_NE(r1.out.find("wrote"), std::string::npos);
    ASSERT_EQ(run_cli(tmp, base + tmp.str("m2.ckpt") + "'").status, 0);
    EXPECT_TRUE(same_bytes(tmp.path() / "m1.ckpt", tmp.path() / "m2.ckpt"));
}

TEST(CliTrain, ModelRendersThroughTheRenderCommand) {
    TempDir tmp;
    ASSERT_EQ(run_cli(tmp, "synth --count 2 --seed 9 --size 16x16 --kernels 9,17 --out '" +
                               tmp.str("ds") + "'")
                  .status,
              0);
    std::ofstream cfg(tmp.str("phases.conf"));
    cfg << "phase1.width = 16\nphase1.height = 16\nphase1.loss = l1\n"
           "phase1.iterations = 2\nphase1.lr_start = 1e-3\nphase1.lr_end = 1e-3\n";
    cfg.close();
    ASSERT_EQ(run_cli(tmp, "train --data '" + tmp.str("ds") + "' --phases '" +
                               tmp.str("phases.conf") +
                               "' --kernels 9,17 --seed 11 --out '" +
                               tmp.str("model.ckpt") + "'")
                  .status,
              0);

    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("ds/input/0000.png") +
                                   "' --depth '" + tmp.str("ds/depth/0000.png") +
                                   "' --model '" + tmp.str("model.ckpt") +
                                   "' --out '" + tmp.str("out.png") +
                                   "' --kernels 9,17 --proc-size 16x16");
    ASSERT_EQ(r.status, 0) << r.err;
    const Image out = load_image(tmp.str("out.png"));
    EXPECT_EQ(out.width, 16);
    for (float v : out.data) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST(CliTrain, ModelKernelCountMismatchFails) {
    TempDir tmp;
    ASSERT_EQ(run_cli(tmp, "synth --count 2 --seed 9 --size 16x16 --kernels 9,17 --out '" +
                               tmp.str("ds") + "'")
                  .status,
              0);
    std::ofstream cfg(tmp.str("phases.conf"));
    cfg << "phase1.width = 16\nphase1.height = 16\nphase1.loss = l1\n"
           "phase1.iterations = 0\nphase1.lr_start = 1e-3\nphase1.lr_end = 1e-4\n";
    cfg.close();
    ASSERT_EQ(run_cli(tmp, "train --data '" + tmp.str("ds") + "' --phases '" +
                               tmp.str("phases.conf") +
                               "' --kernels 9,17 --seed 11 --out '" +
                               tmp.str("model.ckpt") + "'")
                  .status,
              0);
    CmdResult r = run_cli(tmp, "render --input '" + tmp.str("ds/input/0000.png") +
                                   "' --depth '" + tmp.str("ds/depth/0000.png") +
                                   "' --model '" + tmp.str("model.ckpt") +
                                   "' --out '" + tmp.str("out.png") +
                                   "' --kernels 9 --proc-size 16x16");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("levels"), std::string::npos);
}

TEST(CliEval, PerfectMatchScoresTheCap) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "pred");
    fs::create_directories(tmp.path() / "gt");
    for (int i = 0; i < 2; ++i) {
        Image img = testutil::grid_image(16, 16, 3, 400 + static_cast<uint64_t>(i));
        save_image(img, tmp.str("pred/" + std::to_string(i) + ".png"));
        save_image(img, tmp.str("gt/" + std::to_string(i) + ".png"));
    }
    CmdResult r = run_cli(tmp, "eval --pred '" + tmp.str("pred") + "' --gt '" +
                                   tmp.str("gt") + "' --csv '" + tmp.str("report.csv") +
                                   "'");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("2 images: mean psnr 99.0000 dB, mean ssim 1.000000"),
              std::string::npos)
        << r.out;

    const std::string csv = slurp(tmp.path() / "report.csv");
    EXPECT_EQ(csv.rfind("file,psnr,ssim\n", 0), 0u);
    EXPECT_NE(csv.find("0.png,99.000000,1.000000"), std::string::npos);
    EXPECT_NE(csv.find("mean,99.000000,1.000000"), std::string::npos);
}

TEST(CliEval, UnpairedFileFails) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "pred");
    fs::create_directories(tmp.path() / "gt");
    Image img = testutil::grid_image(16, 16, 3, 410);
    save_image(img, tmp.str("pred/a.png"));
    save_image(img, tmp.str("gt/a.png"));
    save_image(img, tmp.str("pred/extra.png"));
    CmdResult r =
        run_cli(tmp, "eval --pred '" + tmp.str("pred") + "' --gt '" + tmp.str("gt") + "'");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("has no counterpart for extra.png"), std::string::npos) << r.err;
}

TEST(CliEval, EmptyDirectoriesFail) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "pred");
    fs::create_directories(tmp.path() / "gt");
    CmdResult r =
        run_cli(tmp, "eval --pred '" + tmp.str("pred") + "' --gt '" + tmp.str("gt") + "'");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("holds no .png"), std::string::npos) << r.err;
}

TEST(CliBench, ReportsRunsAndMedian) {
    TempDir tmp;
    CmdResult r = run_cli(tmp, "bench --size 64x48 --iters 2 --kernels 9,17");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("run 1:"), std::string::npos);
    EXPECT_NE(r.out.find("run 2:"), std::string::npos);
    EXPECT_NE(r.out.find("median"), std::string::npos);
    EXPECT_NE(r.out.find("64x48"), std::string::npos);
    EXPECT_NE(r.out.find("1 thread(s)"), std::string::npos);
}

TEST(CliBaseline, BinaryMaskMatchesTheLibrary) {
    TempDir tmp;
    save_image(testutil::grid_image(64, 48, 3, 420), tmp.str("in.png"));
    Image sal(64, 48, 1);
    Rng rng(421);
    for (auto& v : sal.data) v = rng.next_below(2) ? 1.0f : 0.0f;
    save_image(sal, tmp.str("sal.png"));

    CmdResult r = run_cli(tmp, "baseline --input '" + tmp.str("in.png") +
                                   "' --saliency '" + tmp.str("sal.png") + "' --out '" +
                                   tmp.str("out.png") + "'");
    ASSERT_EQ(r.status, 0) << r.err;

    const Image expected =
        saliency_bokeh(load_image(tmp.str("in.png")), load_image(tmp.str("sal.png")));
    const Image out = load_image(tmp.str("out.png"));
    ASSERT_TRUE(out.same_shape(expected));
    for (size_t i = 0; i < out.data.size(); ++i)
        ASSERT_EQ(out.data[i], quantized8(expected.data[i])) << i;
}

TEST(CliBaseline, DefaultSaliencyIsTheCenterPrior) {
    TempDir tmp;
    save_image(testutil::grid_image(64, 48, 3, 422), tmp.str("in.png"));
    CmdResult r = run_cli(tmp, "baseline --input '" + tmp.str("in.png") + "' --out '" +
                                   tmp.str("out.png") + "'");
    ASSERT_EQ(r.status, 0) << r.err;
    const Image expected =
        saliency_bokeh(load_image(tmp.str("in.png")), center_prior_saliency(64, 48));
    const Image out = load_image(tmp.str("out.png"));
    for (size_t i = 0; i < out.data.size(); ++i)
        ASSERT_EQ(out.data[i], quantized8(expected.data[i])) << i;
}

TEST(CliBaseline, MismatchedSaliencyFails) {
    TempDir tmp;
    save_image(testutil::grid_image(64, 48, 3, 423), tmp.str("in.png"));
    save_image(Image(32, 32, 1), tmp.str("sal.png"));
    CmdResult r = run_cli(tmp, "baseline --input '" + tmp.str("in.png") +
                                   "' --saliency '" + tmp.str("sal.png") + "' --out '" +
                                   tmp.str("out.png") + "'");
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_FALSE(fs::exists(tmp.str("out.png")));
}
