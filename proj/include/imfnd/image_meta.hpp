#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imfnd/errors.hpp"

namespace imfnd {

struct ImageMeta {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::string format;  // "ppm", "pgm", "png", "jpeg"
};

namespace detail {

inline bool skip_pnm_whitespace(const std::vector<unsigned char>& b, std::size_t& i) {
    bool saw = false;
    while (i < b.size()) {
        if (std::isspace(b[i])) {
            ++i;
            saw = true;
        } else if (b[i] == '#') {  // comment runs to end of line
            while (i < b.size() && b[i] != '\n') ++i;
            saw = true;
        } else {
            break;
        }
    }
    return saw;
}

inline std::size_t read_pnm_int(const std::vector<unsigned char>& b, std::size_t& i) {
    if (i >= b.size() || !std::isdigit(b[i])) {
        throw DecodeError("pnm: expected integer in header");
    }
    std::size_t value = 0;
    while (i < b.size() && std::isdigit(b[i])) {
        value = value * 10 + static_cast<std::size_t>(b[i] - '0');
        if (value > 1'000'000'000) throw DecodeError("pnm: header value out of range");
        ++i;
    }
    return value;
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t i) {
    return (static_cast<std::uint32_t>(b[i]) << 24) |
           (static_cast<std::uint32_t>(b[i + 1]) << 16) |
           (static_cast<std::uint32_t>(b[i + 2]) << 8) |
           static_cast<std::uint32_t>(b[i + 3]);
}

inline ImageMeta decode_pnm(const std::vector<unsigned char>& bytes) {
    const char kind = static_cast<char>(bytes[1]);
    std::size_t i = 2;
    skip_pnm_whitespace(bytes, i);
    const std::size_t width = read_pnm_int(bytes, i);
    skip_pnm_whitespace(bytes, i);
    const std::size_t height = read_pnm_int(bytes, i);
    skip_pnm_whitespace(bytes, i);
    const std::size_t maxval = read_pnm_int(bytes, i);
    if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
        throw DecodeError("pnm: bad dimensions or maxval");
    }
    const std::size_t channels = (kind == '6' || kind == '3') ? 3 : 1;
    if (kind == '5' || kind == '6') {
        // Binary payload: exactly one whitespace byte after maxval, then pixels.
        if (i >= bytes.size() || !std::isspace(bytes[i])) {
            throw DecodeError("pnm: missing separator before pixel data");
        }
        ++i;
        const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
        const std::size_t need = width * height * channels * bytes_per_sample;
        if (bytes.size() - i < need) {
            throw DecodeError("pnm: truncated pixel data");
        }
    } else {
        // ASCII payload: count sample tokens.
        std::size_t samples = 0;
        const std::size_t need = width * height * channels;
        while (samples < need) {
            if (!skip_pnm_whitespace(bytes, i) && samples > 0) {
                throw DecodeError("pnm: malformed ascii pixel data");
            }
            if (i >= bytes.size()) throw DecodeError("pnm: truncated ascii pixel data");
            read_pnm_int(bytes, i);
            ++samples;
        }
    }
    ImageMeta meta;
    meta.width = width;
    meta.height = height;
    meta.channels = channels;
    meta.format = channels == 3 ? "ppm" : "pgm";
    return meta;
}

inline ImageMeta decode_png(const std::vector<unsigned char>& bytes) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 + 25) throw DecodeError("png: too short");
    for (std::size_t i = 0; i < 8; ++i) {
        if (bytes[i] != sig[i]) throw DecodeError("png: bad signature");
    }
    // First chunk must be IHDR.
    std::size_t i = 8;
    if (read_be32(bytes, i) != 13 ||
        !(bytes[i + 4] == 'I' && bytes[i + 5] == 'H' && bytes[i + 6] == 'D' && bytes[i + 7] == 'R')) {
        throw DecodeError("png: missing IHDR");
    }
    const std::uint32_t width = read_be32(bytes, i + 8);
    const std::uint32_t height = read_be32(bytes, i + 12);
    const unsigned char color_type = bytes[i + 17];
    std::size_t channels = 0;
    switch (color_type) {
        case 0: channels = 1; break;  // grayscale
        case 2: channels = 3; break;  // truecolor
        case 3: channels = 1; break;  // palette
        case 4: channels = 2; break;  // gray+alpha
        case 6: channels = 4; break;  // rgba
        default: throw DecodeError("png: unknown color type");
    }
    if (width == 0 || height == 0) throw DecodeError("png: zero dimension");
    // Walk the chunk list; a decodable stream must reach IEND in bounds.
    bool saw_iend = false;
    while (i + 12 <= bytes.size()) {
        const std::uint32_t len = read_be32(bytes, i);
        if (len > bytes.size() || i + 12 + static_cast<std::size_t>(len) > bytes.size()) {
            throw DecodeError("png: truncated chunk");
        }
        const std::string type(reinterpret_cast<const char*>(&bytes[i + 4]), 4);
        i += 12 + len;  // length + type + data + crc
        if (type == "IEND") {
            saw_iend = true;
            break;
        }
    }
    if (!saw_iend) throw DecodeError("png: missing IEND");
    ImageMeta meta;
    meta.width = width;
    meta.height = height;
    meta.channels = channels;
    meta.format = "png";
    return meta;
}

inline ImageMeta decode_jpeg(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4 || bytes[0] != 0xFF || bytes[1] != 0xD8) {
        throw DecodeError("jpeg: bad SOI");
    }
    if (bytes[bytes.size() - 2] != 0xFF || bytes[bytes.size() - 1] != 0xD9) {
        throw DecodeError("jpeg: missing EOI");
    }
    std::size_t i = 2;
    while (i + 4 <= bytes.size()) {
        if (bytes[i] != 0xFF) throw DecodeError("jpeg: marker desync");
        const unsigned char marker = bytes[i + 1];
        if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7)) {
            i += 2;
            continue;
        }
        const std::size_t seg_len = (static_cast<std::size_t>(bytes[i + 2]) << 8) | bytes[i + 3];
        if (seg_len < 2 || i + 2 + seg_len > bytes.size()) {
            throw DecodeError("jpeg: truncated segment");
        }
        if (marker == 0xC0 || marker == 0xC1 || marker == 0xC2) {  // SOF0/1/2
            if (seg_len < 8) throw DecodeError("jpeg: short SOF");
            ImageMeta meta;
            meta.height = (static_cast<std::size_t>(bytes[i + 5]) << 8) | bytes[i + 6];
            meta.width = (static_cast<std::size_t>(bytes[i + 7]) << 8) | bytes[i + 8];
            meta.channels = bytes[i + 9];
            meta.format = "jpeg";
            if (meta.width == 0 || meta.height == 0) throw DecodeError("jpeg: zero dimension");
            return meta;
        }
        if (marker == 0xDA) break;  // start of scan; SOF should have appeared
        i += 2 + seg_len;
    }
    throw DecodeError("jpeg: no SOF marker before scan");
}

}  // namespace detail

// Validates that `bytes` form a structurally sound raster image and returns
// its dimensions. Supported containers: PPM/PGM (P2/P3/P5/P6), PNG, JPEG.
// Pixel contents are not interpreted beyond length checks.
inline ImageMeta decode_image_meta(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 2) throw DecodeError("image: too short");
    if (bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '3' || bytes[1] == '5' || bytes[1] == '6')) {
        return detail::decode_pnm(bytes);
    }
    if (bytes[0] == 0x89 && bytes[1] == 'P') {
        return detail::decode_png(bytes);
    }
    if (bytes[0] == 0xFF && bytes[1] == 0xD8) {
        return detail::decode_jpeg(bytes);
    }
    throw DecodeError("image: unrecognized container");
}

}  // namespace imfnd
