#pragma once

// Minimal PNG reader/writer over zlib. The writer emits non-interlaced 8-bit
// RGB; the reader accepts non-interlaced 8-bit grayscale, RGB, and RGBA with
// any scanline filter. Everything else (palette, 16-bit, interlaced) raises
// UnsupportedEncodingError.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "spectral_splat/errors.hpp"
#include "spectral_splat/ply.hpp" // write_file_atomic
#include "spectral_splat/renderer.hpp"

namespace sgs {

struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 0; // 1, 3, or 4
    std::vector<unsigned char> pixels; // row-major, interleaved
};

namespace detail {

inline void png_append_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

inline std::uint32_t png_read_u32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void png_append_chunk(std::string& out, const char type[4], const std::string& body) {
    png_append_u32(out, static_cast<std::uint32_t>(body.size()));
    const std::size_t crc_start = out.size();
    out.append(type, 4);
    out += body;
    const auto* crc_data = reinterpret_cast<const Bytef*>(out.data() + crc_start);
    const uLong crc =
        ::crc32(0L, crc_data, static_cast<uInt>(out.size() - crc_start));
    png_append_u32(out, static_cast<std::uint32_t>(crc));
}

} // namespace detail

inline std::string serialize_png_rgb8(const ImageU8& img) {
    if (img.channels != 3)
        throw ShapeMismatchError("serialize_png_rgb8: expected 3 channels, got " +
                                 std::to_string(img.channels));
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) *
                                 static_cast<std::size_t>(img.height) * 3)
        throw ShapeMismatchError("serialize_png_rgb8: pixel buffer does not match dimensions");

    std::string out("\x89PNG\r\n\x1a\n", 8);

    std::string ihdr;
    detail::png_append_u32(ihdr, static_cast<std::uint32_t>(img.width));
    detail::png_append_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    detail::png_append_chunk(out, "IHDR", ihdr);

    const std::size_t row_bytes = static_cast<std::size_t>(img.width) * 3;
    std::vector<unsigned char> raw((row_bytes + 1) * static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        unsigned char* dst = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        dst[0] = 0; // filter: none
        std::memcpy(dst + 1, img.pixels.data() + static_cast<std::size_t>(y) * row_bytes,
                    row_bytes);
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("serialize_png_rgb8: deflate failed");
    detail::png_append_chunk(
        out, "IDAT", std::string(reinterpret_cast<const char*>(comp.data()), comp_size));
    detail::png_append_chunk(out, "IEND", "");
    return out;
}

inline void save_png_rgb8(const std::string& path, const ImageU8& img) {
    write_file_atomic(path, serialize_png_rgb8(img));
}

inline ImageU8 parse_png(const std::string& bytes, const std::string& origin) {
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(data, "\x89PNG\r\n\x1a\n", 8) != 0)
        throw MalformedHeaderError(origin + ": not a PNG file (bad signature)");

    ImageU8 img;
    int bit_depth = 0;
    int color_type = -1;
    std::string idat;
    std::size_t pos = 8;
    bool saw_ihdr = false;
    bool saw_iend = false;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = detail::png_read_u32(data + pos);
        if (pos + 12 + len > bytes.size())
            throw TruncatedPayloadError(origin + ": chunk at byte offset " + std::to_string(pos) +
                                        " overruns the file");
        const char* type = bytes.data() + pos + 4;
        const unsigned char* body = data + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw MalformedHeaderError(origin + ": IHDR length " +
                                                      std::to_string(len) + ", expected 13");
            img.width = static_cast<int>(detail::png_read_u32(body));
            img.height = static_cast<int>(detail::png_read_u32(body + 4));
            bit_depth = body[8];
            color_type = body[9];
            if (body[12] != 0)
                throw UnsupportedEncodingError(origin + ": interlaced PNG is not supported");
            if (bit_depth != 8)
                throw UnsupportedEncodingError(origin + ": bit depth " +
                                               std::to_string(bit_depth) +
                                               " is not supported, expected 8");
            if (color_type == 0) img.channels = 1;
            else if (color_type == 2) img.channels = 3;
            else if (color_type == 6) img.channels = 4;
            else
                throw UnsupportedEncodingError(origin + ": color type " +
                                               std::to_string(color_type) +
                                               " is not supported (grayscale, RGB, RGBA only)");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.append(bytes, pos + 8, len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        pos += 12 + static_cast<std::size_t>(len);
    }
    if (!saw_ihdr) throw MalformedHeaderError(origin + ": missing IHDR chunk");
    if (!saw_iend) throw TruncatedPayloadError(origin + ": missing IEND chunk at byte offset " +
                                               std::to_string(bytes.size()));
    if (img.width <= 0 || img.height <= 0)
        throw MalformedHeaderError(origin + ": non-positive dimensions");

    const std::size_t row_bytes =
        static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
    const std::size_t raw_size = (row_bytes + 1) * static_cast<std::size_t>(img.height);
    std::vector<unsigned char> raw(raw_size);
    uLongf out_size = static_cast<uLongf>(raw_size);
    const int zrc = uncompress(raw.data(), &out_size,
                               reinterpret_cast<const Bytef*>(idat.data()),
                               static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || out_size != raw_size)
        throw TruncatedPayloadError(origin + ": IDAT inflate produced " +
                                    std::to_string(out_size) + " bytes, expected " +
                                    std::to_string(raw_size));

    // Undo per-row filters.
    img.pixels.assign(row_bytes * static_cast<std::size_t>(img.height), 0);
    const int bpp = img.channels;
    for (int y = 0; y < img.height; ++y) {
        const unsigned char* src = raw.data() + static_cast<std::size_t>(y) * (row_bytes + 1);
        const unsigned char filter = src[0];
        unsigned char* cur = img.pixels.data() + static_cast<std::size_t>(y) * row_bytes;
        const unsigned char* above =
            y > 0 ? img.pixels.data() + static_cast<std::size_t>(y - 1) * row_bytes : nullptr;
        for (std::size_t i = 0; i < row_bytes; ++i) {
            const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - static_cast<std::size_t>(bpp)] : 0;
            const int b = above ? above[i] : 0;
            const int c = (above && i >= static_cast<std::size_t>(bpp))
                              ? above[i - static_cast<std::size_t>(bpp)]
                              : 0;
            int pred = 0;
            switch (filter) {
                case 0: pred = 0; break;
                case 1: pred = a; break;
                case 2: pred = b; break;
                case 3: pred = (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a);
                    const int pb = std::abs(p - b);
                    const int pc = std::abs(p - c);
                    pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default:
                    throw MalformedHeaderError(origin + ": row " + std::to_string(y) +
                                               " uses unknown filter " + std::to_string(filter));
            }
            cur[i] = static_cast<unsigned char>((src[1 + i] + pred) & 0xff);
        }
    }
    return img;
}

inline ImageU8 load_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_png: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_png(bytes, path);
}

// ---------------------------------------------------------------------------
// Framebuffer conversions
// ---------------------------------------------------------------------------

inline ImageU8 framebuffer_to_u8(const Framebuffer& fb) {
    ImageU8 img;
    img.width = fb.width;
    img.height = fb.height;
    img.channels = 3;
    img.pixels.resize(fb.rgb.size());
    for (std::size_t i = 0; i < fb.rgb.size(); ++i) {
        const double clamped = std::min(1.0, std::max(0.0, fb.rgb[i]));
        img.pixels[i] = static_cast<unsigned char>(std::lround(clamped * 255.0));
    }
    return img;
}

inline Framebuffer u8_to_framebuffer(const ImageU8& img) {
    Framebuffer fb(img.width, img.height);
    for (std::size_t p = 0; p < fb.pixel_count(); ++p) {
        for (int ch = 0; ch < 3; ++ch) {
            // Grayscale replicates; RGBA drops alpha.
            const std::size_t src =
                p * static_cast<std::size_t>(img.channels) +
                static_cast<std::size_t>(img.channels == 1 ? 0 : ch);
            fb.rgb[3 * p + static_cast<std::size_t>(ch)] =
                static_cast<double>(img.pixels[src]) / 255.0;
        }
    }
    return fb;
}

} // namespace sgs
