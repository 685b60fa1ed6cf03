#pragma once

#include <png.h>

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"
#include "grid.hpp"

namespace etch {

/*
 * Raster container format, used for every intermediate float map:
 *
 *   offset  size  field
 *        0     4  magic "ETGR"
 *        4     4  version, little endian u32, currently 1
 *        8     4  width
 *       12     4  height
 *       16     4  channels, 1 (scalar) or 3 (vector)
 *       20     -  width*height*channels float32, little endian,
 *                 row major, channels interleaved per pixel
 *
 * Vector payloads do not carry the validity plane; that travels as a
 * separate mask image next to the map.
 */

inline constexpr char kGridMagic[4] = {'E', 'T', 'G', 'R'};
inline constexpr std::uint32_t kGridVersion = 1;
inline constexpr std::size_t kGridHeaderSize = 20;

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open for reading: " + path);
    }
    f.seekg(0, std::ios::end);
    std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(len));
    if (len > 0 && !f.read(reinterpret_cast<char*>(buf.data()), len)) {
        throw IoError("read failed: " + path);
    }
    return buf;
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot open for writing: " + path);
    }
    if (!buf.empty()) {
        f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    f.flush();
    if (!f) {
        throw IoError("write failed: " + path);
    }
}

inline void put_u32le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32le(std::vector<std::uint8_t>& buf, double v, const std::string& path) {
    float f = static_cast<float>(v);
    if (!std::isfinite(f)) {
        throw DataError("sample exceeds float32 range: " + path);
    }
    put_u32le(buf, std::bit_cast<std::uint32_t>(f));
}

inline double get_f32le(const std::uint8_t* p, const std::string& path) {
    float f = std::bit_cast<float>(get_u32le(p));
    if (!std::isfinite(f)) {
        throw FormatError("non-finite sample in payload: " + path);
    }
    return static_cast<double>(f);
}

}  // namespace detail

inline void write_grid(const ScalarGrid& g, const std::string& path) {
    if (g.empty()) {
        throw ConfigError("refusing to write empty grid: " + path);
    }
    std::vector<std::uint8_t> buf;
    buf.reserve(kGridHeaderSize + g.size() * 4);
    buf.insert(buf.end(), kGridMagic, kGridMagic + 4);
    detail::put_u32le(buf, kGridVersion);
    detail::put_u32le(buf, static_cast<std::uint32_t>(g.width()));
    detail::put_u32le(buf, static_cast<std::uint32_t>(g.height()));
    detail::put_u32le(buf, 1);
    for (double v : g.samples()) {
        detail::put_f32le(buf, v, path);
    }
    detail::write_file(path, buf);
}

inline void write_grid(const VectorGrid& g, const std::string& path) {
    if (g.empty()) {
        throw ConfigError("refusing to write empty grid: " + path);
    }
    std::vector<std::uint8_t> buf;
    buf.reserve(kGridHeaderSize + g.size() * 12);
    buf.insert(buf.end(), kGridMagic, kGridMagic + 4);
    detail::put_u32le(buf, kGridVersion);
    detail::put_u32le(buf, static_cast<std::uint32_t>(g.width()));
    detail::put_u32le(buf, static_cast<std::uint32_t>(g.height()));
    detail::put_u32le(buf, 3);
    for (const Vec3& v : g.samples()) {
        detail::put_f32le(buf, v.x, path);
        detail::put_f32le(buf, v.y, path);
        detail::put_f32le(buf, v.z, path);
    }
    detail::write_file(path, buf);
}

inline std::variant<ScalarGrid, VectorGrid> read_grid(const std::string& path) {
    std::vector<std::uint8_t> buf = detail::read_file(path);
    if (buf.size() < kGridHeaderSize) {
        throw FormatError("truncated header: " + path);
    }
    if (std::memcmp(buf.data(), kGridMagic, 4) != 0) {
        throw FormatError("bad magic: " + path);
    }
    std::uint32_t version = detail::get_u32le(buf.data() + 4);
    if (version != kGridVersion) {
        throw FormatError("unsupported version " + std::to_string(version) + ": " + path);
    }
    std::uint32_t w = detail::get_u32le(buf.data() + 8);
    std::uint32_t h = detail::get_u32le(buf.data() + 12);
    std::uint32_t c = detail::get_u32le(buf.data() + 16);
    if (c != 1 && c != 3) {
        throw FormatError("channels must be 1 or 3, got " + std::to_string(c) + ": " + path);
    }
    if (w == 0 || h == 0) {
        throw FormatError("zero dimension: " + path);
    }
    const std::uint32_t limit = 1u << 20;
    std::uint64_t pixels = static_cast<std::uint64_t>(w) * h;
    if (w > limit || h > limit || pixels > (std::uint64_t{1} << 31)) {
        throw CapacityError("declared dimensions too large: " + path);
    }
    std::uint64_t need = pixels * c * 4;
    std::uint64_t have = buf.size() - kGridHeaderSize;
    if (have < need) {
        throw CapacityError("declared dimensions exceed payload: " + path);
    }
    if (have > need) {
        throw FormatError("trailing bytes after payload: " + path);
    }
    const std::uint8_t* p = buf.data() + kGridHeaderSize;
    if (c == 1) {
        std::vector<double> samples(pixels);
        for (std::uint64_t i = 0; i < pixels; ++i, p += 4) {
            samples[i] = detail::get_f32le(p, path);
        }
        return ScalarGrid::from_samples(static_cast<int>(w), static_cast<int>(h),
                                        std::move(samples));
    }
    std::vector<Vec3> samples(pixels);
    for (std::uint64_t i = 0; i < pixels; ++i, p += 12) {
        samples[i] = Vec3{detail::get_f32le(p, path), detail::get_f32le(p + 4, path),
                          detail::get_f32le(p + 8, path)};
    }
    return VectorGrid::from_samples(static_cast<int>(w), static_cast<int>(h), std::move(samples));
}

inline ScalarGrid read_scalar(const std::string& path) {
    auto v = read_grid(path);
    if (!std::holds_alternative<ScalarGrid>(v)) {
        throw FormatError("expected single channel grid: " + path);
    }
    return std::get<ScalarGrid>(std::move(v));
}

inline VectorGrid read_vector(const std::string& path) {
    auto v = read_grid(path);
    if (!std::holds_alternative<VectorGrid>(v)) {
        throw FormatError("expected three channel grid: " + path);
    }
    return std::get<VectorGrid>(std::move(v));
}

namespace detail {

struct PngReader {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) {
            png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        }
        if (fp) {
            std::fclose(fp);
        }
    }
};

struct PngWriter {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) {
            png_destroy_write_struct(&png, info ? &info : nullptr);
        }
        if (fp) {
            std::fclose(fp);
        }
    }
};

}  // namespace detail

// Greyscale PNG of any color type; integer codes map linearly to [0,1] by
// dividing by the largest representable value.
inline ScalarGrid read_png_gray(const std::string& path) {
    detail::PngReader r;
    r.fp = std::fopen(path.c_str(), "rb");
    if (!r.fp) {
        throw IoError("cannot open for reading: " + path);
    }
    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError("not a PNG file: " + path);
    }
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) {
        throw IoError("libpng init failed");
    }
    r.info = png_create_info_struct(r.png);
    if (!r.info) {
        throw IoError("libpng init failed");
    }

    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    // longjmp lands here on any libpng failure; only C frames are skipped.
    if (setjmp(png_jmpbuf(r.png))) {
        throw FormatError("corrupt PNG: " + path);
    }
    png_set_user_limits(r.png, 1u << 20, 1u << 20);
    png_init_io(r.png, r.fp);
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    png_uint_32 w = png_get_image_width(r.png, r.info);
    png_uint_32 h = png_get_image_height(r.png, r.info);
    int color = png_get_color_type(r.png, r.info);
    int depth = png_get_bit_depth(r.png, r.info);

    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(r.png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(r.png);
    }
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) {
        png_set_tRNS_to_alpha(r.png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(r.png);
    }
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(r.png, 1, -1, -1);
    }
    png_set_interlace_handling(r.png);
    png_read_update_info(r.png, r.info);

    depth = png_get_bit_depth(r.png, r.info);
    std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    pixels.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * rowbytes;
    }
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    ScalarGrid g(static_cast<int>(w), static_cast<int>(h));
    if (depth == 16) {
        for (png_uint_32 y = 0; y < h; ++y) {
            const std::uint8_t* row = rows[y];
            for (png_uint_32 x = 0; x < w; ++x) {
                // network byte order inside PNG
                unsigned v = (static_cast<unsigned>(row[2 * x]) << 8) | row[2 * x + 1];
                g.at(static_cast<int>(x), static_cast<int>(y)) = v / 65535.0;
            }
        }
    } else {
        for (png_uint_32 y = 0; y < h; ++y) {
            const std::uint8_t* row = rows[y];
            for (png_uint_32 x = 0; x < w; ++x) {
                g.at(static_cast<int>(x), static_cast<int>(y)) = row[x] / 255.0;
            }
        }
    }
    return g;
}

// Greyscale writer, bit_depth 8 or 16. Values are clamped to [0,1] and
// quantized by rounding. Output carries no timestamps, so identical grids
// produce identical bytes.
inline void write_png_gray(const ScalarGrid& g, const std::string& path, int bit_depth = 8) {
    if (bit_depth != 8 && bit_depth != 16) {
        throw ConfigError("PNG bit depth must be 8 or 16");
    }
    if (g.empty()) {
        throw ConfigError("refusing to write empty image: " + path);
    }
    detail::PngWriter w;
    w.fp = std::fopen(path.c_str(), "wb");
    if (!w.fp) {
        throw IoError("cannot open for writing: " + path);
    }
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) {
        throw IoError("libpng init failed");
    }
    w.info = png_create_info_struct(w.png);
    if (!w.info) {
        throw IoError("libpng init failed");
    }

    std::vector<std::uint8_t> rowbuf;
    if (setjmp(png_jmpbuf(w.png))) {
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(w.png, w.fp);
    png_set_compression_level(w.png, 6);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(g.width()),
                 static_cast<png_uint_32>(g.height()), bit_depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);

    int maxv = bit_depth == 8 ? 255 : 65535;
    rowbuf.resize(static_cast<std::size_t>(g.width()) * (bit_depth == 8 ? 1 : 2));
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            double v = g.at(x, y);
            v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            unsigned q = static_cast<unsigned>(std::lround(v * maxv));
            if (bit_depth == 8) {
                rowbuf[static_cast<std::size_t>(x)] = static_cast<std::uint8_t>(q);
            } else {
                rowbuf[static_cast<std::size_t>(2 * x)] = static_cast<std::uint8_t>(q >> 8);
                rowbuf[static_cast<std::size_t>(2 * x + 1)] = static_cast<std::uint8_t>(q & 0xff);
            }
        }
        png_write_row(w.png, rowbuf.data());
    }
    png_write_end(w.png, nullptr);
}

struct RgbImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row major

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h) {
        check_grid_dims(w, h);
        rgb.assign(static_cast<std::size_t>(w) * h * 3, 0);
    }
    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
};

inline void write_png_rgb(const RgbImage& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0) {
        throw ConfigError("refusing to write empty image: " + path);
    }
    detail::PngWriter w;
    w.fp = std::fopen(path.c_str(), "wb");
    if (!w.fp) {
        throw IoError("cannot open for writing: " + path);
    }
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) {
        throw IoError("libpng init failed");
    }
    w.info = png_create_info_struct(w.png);
    if (!w.info) {
        throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(w.png))) {
        throw IoError("PNG write failed: " + path);
    }
    png_init_io(w.png, w.fp);
    png_set_compression_level(w.png, 6);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(w.png, const_cast<png_bytep>(img.rgb.data() +
                                                   static_cast<std::size_t>(y) * img.width * 3));
    }
    png_write_end(w.png, nullptr);
}

namespace detail {

// P5 header tokenizer: whitespace separated fields, # comments to end of line.
inline long pgm_next_int(const std::vector<std::uint8_t>& buf, std::size_t& pos,
                         const std::string& path) {
    while (pos < buf.size()) {
        if (std::isspace(buf[pos])) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') {
                ++pos;
            }
        } else {
            break;
        }
    }
    if (pos >= buf.size() || !std::isdigit(buf[pos])) {
        throw FormatError("malformed PGM header: " + path);
    }
    long v = 0;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
        v = v * 10 + (buf[pos] - '0');
        if (v > 1 << 24) {
            throw CapacityError("PGM header value too large: " + path);
        }
        ++pos;
    }
    return v;
}

}  // namespace detail

inline ScalarGrid read_pgm(const std::string& path) {
    std::vector<std::uint8_t> buf = detail::read_file(path);
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
        throw FormatError("not a binary PGM: " + path);
    }
    std::size_t pos = 2;
    long w = detail::pgm_next_int(buf, pos, path);
    long h = detail::pgm_next_int(buf, pos, path);
    long maxval = detail::pgm_next_int(buf, pos, path);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
        throw FormatError("bad PGM dimensions or maxval: " + path);
    }
    ++pos;  // single whitespace byte after maxval
    int bytes = maxval > 255 ? 2 : 1;
    std::uint64_t need = static_cast<std::uint64_t>(w) * h * bytes;
    if (buf.size() - pos < need) {
        throw CapacityError("PGM payload shorter than declared: " + path);
    }
    ScalarGrid g(static_cast<int>(w), static_cast<int>(h));
    const std::uint8_t* p = buf.data() + pos;
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            unsigned v;
            if (bytes == 2) {  // most significant byte first
                v = (static_cast<unsigned>(p[0]) << 8) | p[1];
                p += 2;
            } else {
                v = *p++;
            }
            g.at(static_cast<int>(x), static_cast<int>(y)) = static_cast<double>(v) / maxval;
        }
    }
    return g;
}

inline void write_pgm(const ScalarGrid& g, const std::string& path) {
    if (g.empty()) {
        throw ConfigError("refusing to write empty image: " + path);
    }
    std::vector<std::uint8_t> buf;
    std::string header = "P5\n" + std::to_string(g.width()) + " " + std::to_string(g.height()) +
                         "\n255\n";
    buf.insert(buf.end(), header.begin(), header.end());
    for (double v : g.samples()) {
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        buf.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    detail::write_file(path, buf);
}

// Image dimensions from the header alone; recognizes PNG, binary PGM and the
// native grid container.
inline std::pair<int, int> peek_dims(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open for reading: " + path);
    }
    std::uint8_t head[64] = {};
    f.read(reinterpret_cast<char*>(head), sizeof(head));
    std::size_t got = static_cast<std::size_t>(f.gcount());
    static const std::uint8_t png_sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (got >= 24 && std::memcmp(head, png_sig, 8) == 0) {
        // IHDR payload starts at offset 16, width and height big endian
        auto be32 = [&](int off) {
            return (static_cast<std::uint32_t>(head[off]) << 24) |
                   (static_cast<std::uint32_t>(head[off + 1]) << 16) |
                   (static_cast<std::uint32_t>(head[off + 2]) << 8) |
                   static_cast<std::uint32_t>(head[off + 3]);
        };
        return {static_cast<int>(be32(16)), static_cast<int>(be32(20))};
    }
    if (got >= kGridHeaderSize && std::memcmp(head, kGridMagic, 4) == 0) {
        return {static_cast<int>(detail::get_u32le(head + 8)),
                static_cast<int>(detail::get_u32le(head + 12))};
    }
    if (got >= 2 && head[0] == 'P' && head[1] == '5') {
        std::vector<std::uint8_t> buf(head, head + got);
        std::size_t pos = 2;
        long w = detail::pgm_next_int(buf, pos, path);
        long h = detail::pgm_next_int(buf, pos, path);
        return {static_cast<int>(w), static_cast<int>(h)};
    }
    throw FormatError("unrecognized image format: " + path);
}

// Greyscale raster of any supported format, dispatched on content.
inline ScalarGrid read_image_gray(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open for reading: " + path);
    }
    std::uint8_t head[8] = {};
    f.read(reinterpret_cast<char*>(head), sizeof(head));
    std::size_t got = static_cast<std::size_t>(f.gcount());
    f.close();
    static const std::uint8_t png_sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (got >= 8 && std::memcmp(head, png_sig, 8) == 0) {
        return read_png_gray(path);
    }
    if (got >= 4 && std::memcmp(head, kGridMagic, 4) == 0) {
        return read_scalar(path);
    }
    if (got >= 2 && head[0] == 'P' && head[1] == '5') {
        return read_pgm(path);
    }
    throw FormatError("unrecognized image format: " + path);
}

// Mask images binarize at half of full scale.
inline BinaryMask read_mask(const std::string& path) {
    return grid_to_mask(read_image_gray(path), 0.5);
}

inline void write_mask(const BinaryMask& m, const std::string& path) {
    write_png_gray(mask_to_grid(m), path, 8);
}

}  // namespace etch
