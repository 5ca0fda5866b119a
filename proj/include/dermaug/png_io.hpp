#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "dermaug/errors.hpp"
#include "dermaug/image.hpp"

namespace dermaug {
namespace png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::uint8_t* data, std::size_t len) {
    put_u32(out, std::uint32_t(len));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    std::uint32_t crc = std::uint32_t(::crc32(0, out.data() + start, uInt(4 + len)));
    put_u32(out, crc);
}

inline std::vector<std::uint8_t> zlib_deflate(const std::uint8_t* data, std::size_t len) {
    uLongf bound = ::compressBound(uLong(len));
    std::vector<std::uint8_t> out(bound);
    if (::compress2(out.data(), &bound, data, uLong(len), 6) != Z_OK)
        throw IoError("PNG encode: deflate failed");
    out.resize(bound);
    return out;
}

inline std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t len,
                                              std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf out_len = uLong(expected);
    int rc = ::uncompress(out.data(), &out_len, data, uLong(len));
    if (rc != Z_OK || out_len != expected) throw DataError("PNG decode: inflate failed");
    return out;
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

// 8-bit RGB PNG bytes. Scanlines use filter type 0; zlib level 6.
inline std::vector<std::uint8_t> encode_rgb8(int height, int width, const std::uint8_t* rgb) {
    if (height <= 0 || width <= 0) throw IoError("PNG encode: empty image");
    std::vector<std::uint8_t> raw;
    raw.reserve(std::size_t(height) * (std::size_t(width) * 3 + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);  // filter: none
        const std::uint8_t* row = rgb + std::size_t(y) * width * 3;
        raw.insert(raw.end(), row, row + std::size_t(width) * 3);
    }
    auto compressed = detail::zlib_deflate(raw.data(), raw.size());

    std::vector<std::uint8_t> out;
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.insert(out.end(), sig, sig + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = std::uint8_t(width >> 24); ihdr[1] = std::uint8_t(width >> 16);
    ihdr[2] = std::uint8_t(width >> 8);  ihdr[3] = std::uint8_t(width);
    ihdr[4] = std::uint8_t(height >> 24); ihdr[5] = std::uint8_t(height >> 16);
    ihdr[6] = std::uint8_t(height >> 8);  ihdr[7] = std::uint8_t(height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = 0; ihdr[11] = 0; ihdr[12] = 0;
    detail::write_chunk(out, "IHDR", ihdr, 13);
    detail::write_chunk(out, "IDAT", compressed.data(), compressed.size());
    detail::write_chunk(out, "IEND", nullptr, 0);
    return out;
}

struct DecodedPng {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> rgb;  // HWC
};

// Decodes 8-bit grayscale/RGB/RGBA (no interlace, no palette) to RGB.
inline DecodedPng decode_rgb8(const std::uint8_t* bytes, std::size_t len) {
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (len < 8 || std::memcmp(bytes, sig, 8) != 0) throw DataError("PNG decode: bad signature");
    std::size_t pos = 8;
    int width = 0, height = 0, color_type = -1;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= len) {
        std::uint32_t chunk_len = detail::get_u32(bytes + pos);
        if (pos + 12 + chunk_len > len) throw DataError("PNG decode: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes + pos + 4);
        const std::uint8_t* data = bytes + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (chunk_len != 13) throw DataError("PNG decode: bad IHDR");
            width = int(detail::get_u32(data));
            height = int(detail::get_u32(data + 4));
            int bit_depth = data[8];
            color_type = data[9];
            if (bit_depth != 8) throw DataError("PNG decode: only 8-bit supported");
            if (color_type != 0 && color_type != 2 && color_type != 6)
                throw DataError("PNG decode: unsupported color type " + std::to_string(color_type));
            if (data[12] != 0) throw DataError("PNG decode: interlace not supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + chunk_len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + chunk_len;
    }
    if (width <= 0 || height <= 0 || idat.empty()) throw DataError("PNG decode: missing image data");

    int channels = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    std::size_t stride = std::size_t(width) * channels;
    auto raw = detail::zlib_inflate(idat.data(), idat.size(), std::size_t(height) * (stride + 1));

    std::vector<std::uint8_t> pixels(std::size_t(height) * stride);
    for (int y = 0; y < height; ++y) {
        std::uint8_t filter = raw[std::size_t(y) * (stride + 1)];
        const std::uint8_t* src = raw.data() + std::size_t(y) * (stride + 1) + 1;
        std::uint8_t* dst = pixels.data() + std::size_t(y) * stride;
        const std::uint8_t* prev = y > 0 ? pixels.data() + std::size_t(y - 1) * stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            int a = x >= std::size_t(channels) ? dst[x - channels] : 0;
            int b = prev ? prev[x] : 0;
            int c = (prev && x >= std::size_t(channels)) ? prev[x - channels] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw DataError("PNG decode: bad filter type");
            }
            dst[x] = std::uint8_t(v & 0xff);
        }
    }

    DecodedPng out;
    out.height = height;
    out.width = width;
    out.rgb.resize(std::size_t(height) * width * 3);
    for (std::size_t i = 0; i < std::size_t(height) * width; ++i) {
        if (channels == 1) {
            out.rgb[3 * i] = out.rgb[3 * i + 1] = out.rgb[3 * i + 2] = pixels[i];
        } else {
            out.rgb[3 * i] = pixels[channels * i];
            out.rgb[3 * i + 1] = pixels[channels * i + 1];
            out.rgb[3 * i + 2] = pixels[channels * i + 2];
        }
    }
    return out;
}

inline void save_image(const Image& img, const std::filesystem::path& path) {
    auto u8 = img.to_u8();
    auto bytes = encode_rgb8(img.height, img.width, u8.data());
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image for writing: " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw IoError("failed writing image: " + path.string());
}

inline Image load_image(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw DataError("empty image file: " + path.string());
    auto decoded = decode_rgb8(bytes.data(), bytes.size());
    return Image::from_u8(decoded.height, decoded.width, decoded.rgb.data());
}

}  // namespace png
}  // namespace dermaug
