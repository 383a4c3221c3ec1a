#include "sparkprop/video/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace sparkprop::video {

namespace {

std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(static_cast<double>(v) * 255.0), 0L, 255L));
}

Bytes write_pnm(const Image& img, const char* magic, std::size_t channels) {
    if (img.channels != channels) {
        throw InvalidArgument(std::string(magic) + " needs " + std::to_string(channels) + " channel(s), got " +
                              std::to_string(img.channels));
    }
    const std::string header = std::string(magic) + "\n" + std::to_string(img.width) + " " +
                               std::to_string(img.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + img.values.size());
    for (float v : img.values) out.push_back(quantize(v));
    return out;
}

// Skips whitespace and '#' comments, then reads one decimal field.
std::size_t next_field(std::span<const std::uint8_t> b, std::size_t& pos) {
    for (;;) {
        while (pos < b.size() && std::isspace(b[pos])) ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
        v = v * 10 + (b[pos] - '0');
        if (v > (1u << 24)) throw ParseError("header field too large", start);
        ++pos;
    }
    if (pos == start) throw ParseError("expected a number in header", start);
    return v;
}

}  // namespace

Bytes write_ppm(const Image& rgb) { return write_pnm(rgb, "P6", 3); }
Bytes write_pgm(const Image& gray) { return write_pnm(gray, "P5", 1); }

Image read_pnm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        throw ParseError("bad magic, expected P5 or P6", 0);
    }
    const std::size_t channels = bytes[1] == '6' ? 3 : 1;
    std::size_t pos = 2;
    const std::size_t width = next_field(bytes, pos);
    const std::size_t height = next_field(bytes, pos);
    const std::size_t maxval_at = pos;
    const std::size_t maxval = next_field(bytes, pos);
    if (maxval != 255) throw ParseError("unsupported maxval " + std::to_string(maxval), maxval_at);
    if (width == 0 || height == 0) throw ParseError("zero image dimension", 2);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError("missing separator before raster", pos);
    ++pos;
    const std::size_t need = width * height * channels;
    if (bytes.size() - pos < need) {
        throw ParseError("truncated raster, need " + std::to_string(need) + " bytes", pos);
    }
    Image img(height, width, channels);
    for (std::size_t i = 0; i < need; ++i) img.values[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    return img;
}

Image read_ppm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] != '6') throw ParseError("bad magic, expected P6", 0);
    return read_pnm(bytes);
}

Image read_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] != '5') throw ParseError("bad magic, expected P5", 0);
    return read_pnm(bytes);
}

}  // namespace sparkprop::video
