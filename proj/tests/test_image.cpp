#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "bokeh/bokeh.hpp"
#include "test_util.hpp"

using namespace bokeh;
using testutil::TempDir;

TEST(ImageLayout, PlanarAddressing) {
    Image img(4, 3, 2);
    img.at(1, 2, 3) = 0.5f;
    EXPECT_EQ(img.data[(1 * 3 + 2) * 4 + 3], 0.5f);
    EXPECT_EQ(img.plane(1)[2 * 4 + 3], 0.5f);
    EXPECT_EQ(img.plane_size(), 12u);
    EXPECT_EQ(img.size(), 24u);
}

TEST(ImageLayout, SameShape) {
    Image a(4, 3, 2), b(4, 3, 2), c(3, 4, 2), d(4, 3, 1);
    EXPECT_TRUE(a.same_shape(b));
    EXPECT_FALSE(a.same_shape(c));
    EXPECT_FALSE(a.same_shape(d));
}

TEST(Convert, FloatDoubleRoundTrip) {
    Image img = testutil::random_image(5, 4, 3, 1);
    BasicImage<double> d = convert_image<double>(img);
    Image back = convert_image<float>(d);
    EXPECT_EQ(img.data, back.data);

    DepthMap dm = testutil::random_depth(5, 4, 2);
    DepthMap dback = convert_depth<float>(convert_depth<double>(dm));
    EXPECT_EQ(dm.values, dback.values);
}

TEST(Resize, IdentityIsExact) {
    Image img = testutil::random_image(7, 5, 3, 3);
    Image out = resize_bilinear(img, 7, 5);
    EXPECT_EQ(img.data, out.data);

    DepthMap d = testutil::random_depth(7, 5, 4);
    EXPECT_EQ(resize_bilinear(d, 7, 5).values, d.values);
}

TEST(Resize, CheckerboardAverage) {
    Image img(2, 2, 1);
    img.at(0, 0, 0) = 0.0f;
    img.at(0, 0, 1) = 1.0f;
    img.at(0, 1, 0) = 1.0f;
    img.at(0, 1, 1) = 0.0f;
    Image out = resize_bilinear(img, 1, 1);
    EXPECT_EQ(out.at(0, 0, 0), 0.5f);
}

TEST(Resize, HalfPixelCenters) {
    Image img(2, 1, 1);
    img.at(0, 0, 0) = 0.0f;
    img.at(0, 0, 1) = 1.0f;
    Image out = resize_bilinear(img, 4, 1);
    EXPECT_EQ(out.at(0, 0, 0), 0.0f);
    EXPECT_EQ(out.at(0, 0, 1), 0.25f);
    EXPECT_EQ(out.at(0, 0, 2), 0.75f);
    EXPECT_EQ(out.at(0, 0, 3), 1.0f);
}

TEST(Resize, UpscaleOfConstantStaysConstant) {
    Image img(3, 3, 2, 0.625f);
    Image out = resize_bilinear(img, 10, 7);
    for (float v : out.data) EXPECT_EQ(v, 0.625f);
}

TEST(Flip, HorizontalReversesRows) {
    Image img = testutil::random_image(5, 3, 2, 5);
    Image out = flip(img, Axis::horizontal);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 5; ++x)
                EXPECT_EQ(out.at(c, y, x), img.at(c, y, 4 - x));
}

TEST(Flip, VerticalReversesColumns) {
    Image img = testutil::random_image(5, 3, 2, 6);
    Image out = flip(img, Axis::vertical);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 5; ++x)
                EXPECT_EQ(out.at(c, y, x), img.at(c, 2 - y, x));
}

TEST(Flip, InvolutionIsExact) {
    Image img = testutil::random_image(6, 4, 3, 7);
    EXPECT_EQ(flip(flip(img, Axis::horizontal), Axis::horizontal).data, img.data);
    EXPECT_EQ(flip(flip(img, Axis::vertical), Axis::vertical).data, img.data);

    DepthMap d = testutil::random_depth(6, 4, 8);
    EXPECT_EQ(flip(flip(d, Axis::horizontal), Axis::horizontal).values, d.values);
    EXPECT_EQ(flip(flip(d, Axis::vertical), Axis::vertical).values, d.values);
}

TEST(PngIo, Rgb8RoundTripIsExact) {
    TempDir tmp;
    Image img = testutil::grid_image(9, 6, 3, 11);
    save_image(img, tmp.str("rgb.png"));
    Image back = load_image(tmp.str("rgb.png"));
    EXPECT_EQ(back.width, 9);
    EXPECT_EQ(back.height, 6);
    EXPECT_EQ(back.channels, 3);
    EXPECT_EQ(back.data, img.data);
}

TEST(PngIo, Gray8RoundTripIsExact) {
    TempDir tmp;
    Image img = testutil::grid_image(5, 7, 1, 12);
    save_image(img, tmp.str("gray.png"));
    Image back = load_image(tmp.str("gray.png"));
    EXPECT_EQ(back.channels, 1);
    EXPECT_EQ(back.data, img.data);
}

TEST(PngIo, Depth16RoundTripIsExact) {
    TempDir tmp;
    DepthMap d(6, 5);
    Rng rng(13);
    for (auto& v : d.values)
        v = static_cast<float>(rng.next_below(65536)) * (1.0f / 65535.0f);
    save_depth(d, tmp.str("depth.png"));
    DepthMap back = load_depth(tmp.str("depth.png"));
    EXPECT_EQ(back.width, 6);
    EXPECT_EQ(back.height, 5);
    EXPECT_EQ(back.values, d.values);
}

TEST(PngIo, QuantizationRoundsToNearest) {
    TempDir tmp;
    Image img(2, 1, 1);
    img.at(0, 0, 0) = 0.5f / 255.0f * 0.99f; // just below half a step
    img.at(0, 0, 1) = 0.5f / 255.0f * 1.01f; // just above
    save_image(img, tmp.str("q.png"));
    Image back = load_image(tmp.str("q.png"));
    EXPECT_EQ(back.at(0, 0, 0), 0.0f);
    EXPECT_EQ(back.at(0, 0, 1), 1.0f / 255.0f);
}

TEST(PnmIo, PpmRoundTripIsExact) {
    TempDir tmp;
    Image img = testutil::grid_image(8, 3, 3, 14);
    save_image(img, tmp.str("img.ppm"));
    Image back = load_image(tmp.str("img.ppm"));
    EXPECT_EQ(back.channels, 3);
    EXPECT_EQ(back.data, img.data);
}

TEST(PnmIo, PgmRoundTripIsExact) {
    TempDir tmp;
    Image img = testutil::grid_image(3, 8, 1, 15);
    save_image(img, tmp.str("img.pgm"));
    Image back = load_image(tmp.str("img.pgm"));
    EXPECT_EQ(back.channels, 1);
    EXPECT_EQ(back.data, img.data);
}

TEST(PnmIo, SixteenBitBigEndianRead) {
    TempDir tmp;
    const std::string path = tmp.str("wide.pgm");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    ASSERT_NE(f, nullptr);
    std::fprintf(f, "P5\n# comment line\n2 1\n65535\n");
    const unsigned char bytes[4] = {0x12, 0x34, 0xFF, 0xFF}; // 0x1234, 0xFFFF
    std::fwrite(bytes, 1, 4, f);
    std::fclose(f);

    Image img = load_image(path);
    ASSERT_EQ(img.channels, 1);
    EXPECT_FLOAT_EQ(img.at(0, 0, 0), 0x1234 / 65535.0f);
    EXPECT_EQ(img.at(0, 0, 1), 1.0f);
}

TEST(ImageIoErrors, MissingFile) {
    try {
        load_image("/nonexistent/nope.png");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::file_unreadable);
    }
}

TEST(ImageIoErrors, UnrecognizedFormat) {
    TempDir tmp;
    const std::string path = tmp.str("junk.png");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    ASSERT_NE(f, nullptr);
    std::fputs("this is not an image", f);
    std::fclose(f);
    try {
        load_image(path);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unsupported_format);
    }
}

TEST(ImageIoErrors, TruncatedPnmData) {
    TempDir tmp;
    const std::string path = tmp.str("short.pgm");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    ASSERT_NE(f, nullptr);
    std::fprintf(f, "P5\n4 4\n255\n");
    std::fputc(0x10, f); // 1 of 16 payload bytes
    std::fclose(f);
    EXPECT_THROW(load_image(path), Error);
}

TEST(ImageIoErrors, DepthRejectsRgb) {
    TempDir tmp;
    save_image(testutil::grid_image(4, 4, 3, 16), tmp.str("rgb.png"));
    try {
        load_depth(tmp.str("rgb.png"));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unsupported_format);
    }
}

TEST(ImageIoErrors, UnwritablePath) {
    Image img = testutil::grid_image(4, 4, 3, 17);
    try {
        save_image(img, "/nonexistent/dir/out.png");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::file_unwritable);
    }
}
