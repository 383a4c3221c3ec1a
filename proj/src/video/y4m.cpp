#include "sparkprop/video/y4m.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

namespace sparkprop::video {

namespace {

constexpr std::string_view kMagic = "YUV4MPEG2";

std::uint8_t to_code(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::size_t find_newline(std::span<const std::uint8_t> bytes, std::size_t from, const char* what) {
    for (std::size_t i = from; i < bytes.size(); ++i) {
        if (bytes[i] == '\n') return i;
    }
    throw ParseError(std::string("unterminated ") + what, from);
}

std::uint32_t parse_uint(std::string_view s, std::size_t offset, const char* what) {
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError(std::string("bad ") + what + " '" + std::string(s) + "'", offset);
    }
    return v;
}

}  // namespace

void rgb_to_ycbcr(const float rgb[3], std::uint8_t out[3]) {
    const double r = rgb[0] * 255.0, g = rgb[1] * 255.0, b = rgb[2] * 255.0;
    out[0] = to_code(0.299 * r + 0.587 * g + 0.114 * b);
    out[1] = to_code(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
    out[2] = to_code(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
}

void ycbcr_to_rgb(std::uint8_t y, std::uint8_t cb, std::uint8_t cr, float out[3]) {
    const double u = cb - 128.0, v = cr - 128.0;
    const double r = y + 1.402 * v;
    const double g = y - 0.344136 * u - 0.714136 * v;
    const double b = y + 1.772 * u;
    out[0] = static_cast<float>(std::clamp(r / 255.0, 0.0, 1.0));
    out[1] = static_cast<float>(std::clamp(g / 255.0, 0.0, 1.0));
    out[2] = static_cast<float>(std::clamp(b / 255.0, 0.0, 1.0));
}

Y4mClip read_y4m(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size() || std::string_view(reinterpret_cast<const char*>(bytes.data()), kMagic.size()) != kMagic) {
        throw ParseError("missing YUV4MPEG2 signature", 0);
    }
    const std::size_t header_end = find_newline(bytes, 0, "stream header");
    std::string_view header(reinterpret_cast<const char*>(bytes.data()), header_end);

    std::size_t width = 0, height = 0;
    bool chroma420 = true;
    FrameRate fps;
    std::size_t pos = kMagic.size();
    while (pos < header.size()) {
        if (header[pos] == ' ') {
            ++pos;
            continue;
        }
        std::size_t end = header.find(' ', pos);
        if (end == std::string_view::npos) end = header.size();
        const std::string_view tok = header.substr(pos, end - pos);
        const std::string_view val = tok.substr(1);
        switch (tok[0]) {
            case 'W': width = parse_uint(val, pos, "width"); break;
            case 'H': height = parse_uint(val, pos, "height"); break;
            case 'F': {
                const auto colon = val.find(':');
                if (colon == std::string_view::npos) throw ParseError("bad frame rate '" + std::string(val) + "'", pos);
                fps.num = parse_uint(val.substr(0, colon), pos, "frame rate");
                fps.den = parse_uint(val.substr(colon + 1), pos, "frame rate");
                if (fps.num == 0 || fps.den == 0) throw ParseError("zero frame rate", pos);
                break;
            }
            case 'C':
                if (val == "444") {
                    chroma420 = false;
                } else if (val.rfind("420", 0) == 0) {
                    chroma420 = true;
                } else {
                    throw ParseError("unsupported colorspace C" + std::string(val), pos);
                }
                break;
            default: break;  // I, A, X: irrelevant for decoding
        }
        pos = end;
    }
    if (width == 0 || height == 0) throw ParseError("header lacks a positive W and H", 0);

    const std::size_t cw = chroma420 ? (width + 1) / 2 : width;
    const std::size_t ch = chroma420 ? (height + 1) / 2 : height;
    const std::size_t frame_bytes = width * height + 2 * cw * ch;

    std::vector<std::size_t> payloads;
    std::size_t cursor = header_end + 1;
    while (cursor < bytes.size()) {
        constexpr std::string_view kFrame = "FRAME";
        if (bytes.size() - cursor < kFrame.size() ||
            std::string_view(reinterpret_cast<const char*>(bytes.data() + cursor), kFrame.size()) != kFrame) {
            throw ParseError("expected FRAME marker", cursor);
        }
        const std::size_t line_end = find_newline(bytes, cursor, "FRAME header");
        if (bytes.size() - (line_end + 1) < frame_bytes) {
            throw ParseError("truncated frame payload, need " + std::to_string(frame_bytes) + " bytes", line_end + 1);
        }
        payloads.push_back(line_end + 1);
        cursor = line_end + 1 + frame_bytes;
    }
    if (payloads.empty()) throw ParseError("empty stream", cursor);

    Y4mClip clip{Video(payloads.size(), height, width), fps};
    for (std::size_t t = 0; t < payloads.size(); ++t) {
        const std::uint8_t* py = bytes.data() + payloads[t];
        const std::uint8_t* pu = py + width * height;
        const std::uint8_t* pv = pu + cw * ch;
        for (std::size_t y = 0; y < height; ++y) {
            const std::size_t cy = chroma420 ? y / 2 : y;
            for (std::size_t x = 0; x < width; ++x) {
                const std::size_t cx = chroma420 ? x / 2 : x;
                ycbcr_to_rgb(py[y * width + x], pu[cy * cw + cx], pv[cy * cw + cx], &clip.video.at(t, y, x, 0));
            }
        }
    }
    return clip;
}

Bytes write_y4m(const Video& video, FrameRate fps) {
    const std::string header = "YUV4MPEG2 W" + std::to_string(video.width) + " H" + std::to_string(video.height) +
                               " F" + std::to_string(fps.num) + ":" + std::to_string(fps.den) + " Ip A1:1 C444\n";
    const std::size_t plane = video.width * video.height;
    Bytes out(header.begin(), header.end());
    out.reserve(out.size() + video.frames * (6 + 3 * plane));
    std::vector<std::uint8_t> planes(3 * plane);
    for (std::size_t t = 0; t < video.frames; ++t) {
        for (std::size_t i = 0; i < plane; ++i) {
            std::uint8_t yuv[3];
            rgb_to_ycbcr(&video.values[(t * plane + i) * 3], yuv);
            planes[i] = yuv[0];
            planes[plane + i] = yuv[1];
            planes[2 * plane + i] = yuv[2];
        }
        constexpr std::string_view kFrame = "FRAME\n";
        out.insert(out.end(), kFrame.begin(), kFrame.end());
        out.insert(out.end(), planes.begin(), planes.end());
    }
    return out;
}

}  // namespace sparkprop::video
