#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "bokeh/error.hpp"
#include "bokeh/fileutil.hpp"
#include "bokeh/image.hpp"

namespace bokeh {

namespace detail {

// ---- PNG ----

inline Image read_png(const std::string& path) {
    FilePtr file = open_file(path, "rb", ErrorCode::file_unreadable);

    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
        fail(ErrorCode::unsupported_format, "'" + path + "' is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::file_unreadable, "libpng init failed for '" + path + "'");
    }

    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    bool bad_depth = false;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::file_unreadable, "corrupt PNG '" + path + "'");
    }

    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (depth < 8) {
        bad_depth = true;
    } else {
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if ((color & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS))
            png_set_strip_alpha(png);
        png_set_interlace_handling(png);
        png_read_update_info(png, info);

        size_t rowbytes = png_get_rowbytes(png, info);
        raw.resize(rowbytes * h);
        rows.resize(h);
        for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + rowbytes * y;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }

    int channels = bad_depth ? 0 : png_get_channels(png, info);
    depth = bad_depth ? depth : png_get_bit_depth(png, info);
    size_t rowbytes = bad_depth ? 0 : png_get_rowbytes(png, info);
    png_destroy_read_struct(&png, &info, nullptr);

    if (bad_depth)
        fail(ErrorCode::unsupported_format,
             "'" + path + "': sub-8-bit PNG not supported");
    if (channels != 1 && channels != 3)
        fail(ErrorCode::unsupported_format,
             "'" + path + "': unsupported channel count after decode");

    Image img(static_cast<int>(w), static_cast<int>(h), channels);
    const float norm = depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = raw.data() + rowbytes * y;
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                unsigned v;
                if (depth == 16) {
                    size_t off = (static_cast<size_t>(x) * channels + c) * 2;
                    v = (static_cast<unsigned>(row[off]) << 8) | row[off + 1];
                } else {
                    v = row[static_cast<size_t>(x) * channels + c];
                }
                img.at(c, static_cast<int>(y), static_cast<int>(x)) = v * norm;
            }
        }
    }
    return img;
}

inline void write_png(const Image& img, const std::string& path, int bit_depth) {
    FilePtr file = open_file(path, "wb", ErrorCode::file_unwritable);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::file_unwritable, "libpng init failed for '" + path + "'");
    }

    const int channels = img.channels;
    const png_uint_32 w = static_cast<png_uint_32>(img.width);
    const png_uint_32 h = static_cast<png_uint_32>(img.height);
    const size_t bytes_per_sample = bit_depth == 16 ? 2 : 1;
    const double maxval = bit_depth == 16 ? 65535.0 : 255.0;

    std::vector<png_byte> raw(static_cast<size_t>(w) * h * channels * bytes_per_sample);
    std::vector<png_bytep> rows(h);
    size_t rowbytes = static_cast<size_t>(w) * channels * bytes_per_sample;
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + rowbytes * y;

    for (png_uint_32 y = 0; y < h; ++y) {
        png_byte* row = rows[y];
        for (png_uint_32 x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                double s = img.at(c, static_cast<int>(y), static_cast<int>(x));
                long q = std::lround(s * maxval);
                q = std::clamp(q, 0l, static_cast<long>(maxval));
                if (bit_depth == 16) {
                    size_t off = (static_cast<size_t>(x) * channels + c) * 2;
                    row[off] = static_cast<png_byte>(q >> 8);
                    row[off + 1] = static_cast<png_byte>(q & 0xff);
                } else {
                    row[static_cast<size_t>(x) * channels + c] = static_cast<png_byte>(q);
                }
            }
        }
    }

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::file_unwritable, "PNG write failed for '" + path + "'");
    }

    png_init_io(png, file.get());
    int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, w, h, bit_depth, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---- binary PGM / PPM ----

inline int pnm_read_value(std::FILE* f, const std::string& path) {
    int c;
    for (;;) {
        c = std::fgetc(f);
        if (c == '#') {
            while (c != '\n' && c != EOF) c = std::fgetc(f);
        } else if (!std::isspace(c)) {
            break;
        }
    }
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = std::fgetc(f);
    }
    if (!any) fail(ErrorCode::unsupported_format, "malformed PNM header in '" + path + "'");
    return value;
}

inline Image read_pnm(const std::string& path) {
    FilePtr file = open_file(path, "rb", ErrorCode::file_unreadable);
    std::FILE* f = file.get();

    int m0 = std::fgetc(f), m1 = std::fgetc(f);
    int channels;
    if (m0 == 'P' && m1 == '5') channels = 1;
    else if (m0 == 'P' && m1 == '6') channels = 3;
    else fail(ErrorCode::unsupported_format, "'" + path + "': only binary PGM (P5) / PPM (P6) supported");

    int w = pnm_read_value(f, path);
    int h = pnm_read_value(f, path);
    int maxval = pnm_read_value(f, path);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535)
        fail(ErrorCode::unsupported_format, "bad PNM dimensions in '" + path + "'");

    const size_t bps = maxval > 255 ? 2 : 1;
    const size_t count = static_cast<size_t>(w) * h * channels;
    std::vector<std::uint8_t> raw(count * bps);
    if (std::fread(raw.data(), 1, raw.size(), f) != raw.size())
        fail(ErrorCode::file_unreadable, "truncated PNM data in '" + path + "'");

    Image img(w, h, channels);
    const float norm = 1.0f / maxval;
    size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c, ++i) {
                unsigned v = bps == 2
                    ? (static_cast<unsigned>(raw[i * 2]) << 8) | raw[i * 2 + 1]
                    : raw[i];
                img.at(c, y, x) = v * norm;
            }
        }
    }
    return img;
}

inline void write_pnm(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        fail(ErrorCode::invalid_argument, "PNM supports 1 or 3 channels");
    FilePtr file = open_file(path, "wb", ErrorCode::file_unwritable);
    std::FILE* f = file.get();
    std::fprintf(f, "P%c\n%d %d\n255\n", img.channels == 1 ? '5' : '6', img.width, img.height);
    std::vector<std::uint8_t> row(static_cast<size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                long q = std::lround(img.at(c, y, x) * 255.0);
                row[static_cast<size_t>(x) * img.channels + c] =
                    static_cast<std::uint8_t>(std::clamp(q, 0l, 255l));
            }
        }
        if (std::fwrite(row.data(), 1, row.size(), f) != row.size())
            fail(ErrorCode::file_unwritable, "short write to '" + path + "'");
    }
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace detail

// Loads an 8/16-bit PNG or a binary PGM/PPM, scaled to [0,1] by the format's
// max value. Grayscale files load as 1 channel.
inline Image load_image(const std::string& path) {
    detail::FilePtr probe = detail::open_file(path, "rb", ErrorCode::file_unreadable);
    unsigned char magic[2] = {0, 0};
    size_t got = std::fread(magic, 1, 2, probe.get());
    probe.reset();
    if (got == 2 && magic[0] == 0x89 && magic[1] == 'P') return detail::read_png(path);
    if (got == 2 && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'))
        return detail::read_pnm(path);
    fail(ErrorCode::unsupported_format, "'" + path + "': unrecognized image format");
}

// Writes 8-bit output; quantization is round(sample*255) clamped. The format
// follows the file extension: .pgm/.ppm produce binary PNM, anything else PNG.
inline void save_image(const Image& img, const std::string& path) {
    if (detail::has_suffix(path, ".pgm") || detail::has_suffix(path, ".ppm"))
        detail::write_pnm(img, path);
    else
        detail::write_png(img, path, 8);
}

// 16-bit PNG writer, used for depth maps.
inline void save_image_16(const Image& img, const std::string& path) {
    detail::write_png(img, path, 16);
}

inline DepthMap load_depth(const std::string& path) {
    Image img = load_image(path);
    if (img.channels != 1)
        fail(ErrorCode::unsupported_format,
             "'" + path + "': depth maps must be single-channel");
    DepthMap d(img.width, img.height);
    d.values = std::move(img.data);
    return d;
}

inline void save_depth(const DepthMap& d, const std::string& path) {
    Image img(d.width, d.height, 1);
    img.data = d.values;
    save_image_16(img, path);
}

} // namespace bokeh
