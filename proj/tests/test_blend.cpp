#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "bokeh/bokeh.hpp"
#include "test_util.hpp"

using namespace bokeh;

namespace {

Logits random_logits(int w, int h, int levels, uint64_t seed, double lo, double hi) {
    Logits lg(w, h, levels);
    Rng rng(seed);
    for (auto& v : lg.values) v = static_cast<float>(rng.next_range(lo, hi));
    return lg;
}

WeightMaps one_hot(int w, int h, int levels, int hot) {
    WeightMaps wm(w, h, levels);
    std::fill(wm.values.begin(), wm.values.end(), 0.0f);
    std::fill(wm.values.begin() + wm.plane_size() * hot,
              wm.values.begin() + wm.plane_size() * (hot + 1), 1.0f);
    return wm;
}

} // namespace

TEST(Softmax, EqualLogitsGiveUniformWeights) {
    Logits lg(3, 2, 4);
    std::fill(lg.values.begin(), lg.values.end(), -7.25f);
    WeightMaps w = spatial_softmax(lg);
    for (float v : w.values) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Softmax, TwoLevelClosedForm) {
    Logits lg(1, 1, 2);
    lg.values[0] = 0.0f;
    lg.values[1] = static_cast<float>(std::log(2.0));
    WeightMaps w = spatial_softmax(lg);
    EXPECT_NEAR(w.values[0], 1.0 / 3.0, 1e-7);
    EXPECT_NEAR(w.values[1], 2.0 / 3.0, 1e-7);
}

TEST(Softmax, ShiftInvariance) {
    // Logits on the 1/64 grid so adding 64 is exact in float; the shifted
    // field must then produce bit-identical weights.
    Logits a(5, 4, 3);
    Rng rng(31);
    for (auto& v : a.values)
        v = static_cast<float>(static_cast<double>(rng.next_below(257)) - 128.0) / 64.0f;
    Logits b = a;
    for (auto& v : b.values) v += 64.0f;
    EXPECT_EQ(spatial_softmax(a).values, spatial_softmax(b).values);
}

TEST(Softmax, SumsToOnePerPixel) {
    Logits lg = random_logits(17, 13, 5, 32, -10.0, 10.0);
    WeightMaps w = spatial_softmax(lg);
    const size_t plane = w.plane_size();
    for (size_t p = 0; p < plane; ++p) {
        double sum = 0.0;
        for (int i = 0; i < w.levels; ++i) sum += w.values[plane * i + p];
        // exact in 64-bit inside the softmax; the stored 32-bit planes keep
        // the sum within a few float ulps
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Softmax, SurvivesExtremeLogits) {
    Logits lg = random_logits(16, 16, 4, 33, -1e4, 1e4);
    WeightMaps w = spatial_softmax(lg);
    const size_t plane = w.plane_size();
    for (size_t p = 0; p < plane; ++p) {
        double sum = 0.0;
        for (int i = 0; i < w.levels; ++i) {
            const float v = w.values[plane * i + p];
            ASSERT_TRUE(std::isfinite(v));
            ASSERT_GE(v, 0.0f);
            ASSERT_LE(v, 1.0f);
            sum += v;
        }
        ASSERT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Softmax, DominantLogitTakesAllTheWeight) {
    Logits lg(1, 1, 3);
    lg.values = {1e4f, -1e4f, 0.0f};
    WeightMaps w = spatial_softmax(lg);
    EXPECT_EQ(w.values[0], 1.0f);
    EXPECT_EQ(w.values[1], 0.0f);
    EXPECT_EQ(w.values[2], 0.0f);
}

TEST(Softmax, RejectsNonFiniteLogits) {
    for (float bad : {std::numeric_limits<float>::quiet_NaN(),
                      std::numeric_limits<float>::infinity(),
                      -std::numeric_limits<float>::infinity()}) {
        Logits lg(2, 2, 2);
        lg.values[5] = bad;
        try {
            spatial_softmax(lg);
            FAIL() << "expected an error";
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::non_finite);
        }
    }
}

TEST(Softmax, ThreadCountDoesNotChangeOutput) {
    Logits lg = random_logits(19, 11, 4, 34, -5.0, 5.0);
    EXPECT_EQ(spatial_softmax(lg, 1).values, spatial_softmax(lg, 4).values);
}

TEST(Blend, MatchesBruteForceReference) {
    Image img = testutil::random_image(16, 16, 3, 35);
    std::vector<Image> smoothed;
    for (uint64_t s = 0; s < 3; ++s)
        smoothed.push_back(testutil::random_image(16, 16, 3, 36 + s));
    WeightMaps w = spatial_softmax(random_logits(16, 16, 4, 39, -3.0, 3.0));

    Image fast = blend(img, std::span<const Image>(smoothed), w);
    Image ref = brute_force_blend(img, std::span<const Image>(smoothed), w);
    for (size_t i = 0; i < fast.data.size(); ++i)
        ASSERT_NEAR(fast.data[i], ref.data[i], 1e-6);
}

TEST(Blend, SharpOneHotReturnsOriginalExactly) {
    Image img = testutil::random_image(16, 12, 3, 40);
    std::vector<Image> smoothed = {gaussian_blur(img, 9), gaussian_blur(img, 17)};
    Image out = blend(img, std::span<const Image>(smoothed), one_hot(16, 12, 3, 0));
    EXPECT_EQ(out.data, img.data);
}

TEST(Blend, SmoothedOneHotReturnsThatLevelExactly) {
    Image img = testutil::random_image(16, 12, 3, 41);
    std::vector<Image> smoothed = {gaussian_blur(img, 9), gaussian_blur(img, 17)};
    Image out = blend(img, std::span<const Image>(smoothed), one_hot(16, 12, 3, 2));
    EXPECT_EQ(out.data, smoothed[1].data);
}

TEST(Blend, WeightPlanesBroadcastAcrossChannels) {
    Image img(2, 1, 3);
    img.data = {0.0f, 0.2f, 0.4f, 0.6f, 0.8f, 1.0f};
    Image smooth(2, 1, 3, 0.5f);
    std::vector<Image> smoothed = {smooth};
    WeightMaps w(2, 1, 2);
    w.values = {0.25f, 0.75f, 0.75f, 0.25f};
    Image out = blend(img, std::span<const Image>(smoothed), w);
    for (int c = 0; c < 3; ++c) {
        EXPECT_NEAR(out.at(c, 0, 0), 0.25 * img.at(c, 0, 0) + 0.75 * 0.5, 1e-7);
        EXPECT_NEAR(out.at(c, 0, 1), 0.75 * img.at(c, 0, 1) + 0.25 * 0.5, 1e-7);
    }
}

TEST(Blend, ConvexWeightsKeepRange) {
    Image img = testutil::random_image(12, 12, 3, 42);
    std::vector<Image> smoothed = {gaussian_blur(img, 9)};
    WeightMaps w = spatial_softmax(random_logits(12, 12, 2, 43, -4.0, 4.0));
    Image out = blend(img, std::span<const Image>(smoothed), w);
    for (float v : out.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(Blend, ShapeErrors) {
    Image img = testutil::random_image(8, 8, 3, 44);
    std::vector<Image> smoothed = {gaussian_blur(img, 9)};
    const std::span<const Image> stack(smoothed);

    // level count must be smoothed count + 1
    EXPECT_THROW(blend(img, stack, WeightMaps(8, 8, 3)), Error);
    // weight dims must match the image
    EXPECT_THROW(blend(img, stack, WeightMaps(8, 7, 2)), Error);
    // smoothed dims must match the original
    std::vector<Image> bad = {testutil::random_image(7, 8, 3, 45)};
    try {
        blend(img, std::span<const Image>(bad), WeightMaps(8, 8, 2));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::shape_mismatch);
    }
}

TEST(Blend, ThreadCountDoesNotChangeOutput) {
    Image img = testutil::random_image(21, 14, 3, 46);
    std::vector<Image> smoothed = {gaussian_blur(img, 9), gaussian_blur(img, 25)};
    WeightMaps w = spatial_softmax(random_logits(21, 14, 3, 47, -3.0, 3.0));
    Image one = blend(img, std::span<const Image>(smoothed), w, 1);
    Image four = blend(img, std::span<const Image>(smoothed), w, 4);
    EXPECT_EQ(one.data, four.data);
}

TEST(WeightPlane, ExtractsSingleLevel) {
    WeightMaps w = spatial_softmax(random_logits(6, 5, 3, 48, -2.0, 2.0));
    Image p1 = weight_plane_image(w, 1);
    EXPECT_EQ(p1.channels, 1);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x)
            EXPECT_EQ(p1.at(0, y, x), w.at(1, y, x));
    EXPECT_THROW(weight_plane_image(w, 3), Error);
    EXPECT_THROW(weight_plane_image(w, -1), Error);
}
