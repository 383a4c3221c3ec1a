#pragma once

#include <cstdint>
#include <span>

#include "sparkprop/bytes.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::video {

struct FrameRate {
    std::uint32_t num = 24;
    std::uint32_t den = 1;
};

struct Y4mClip {
    Video video;
    FrameRate fps;
};

/// Decodes C444 or C420 (any 4:2:0 siting variant) 8-bit streams to RGB with
/// full-range BT.601. A header without a C tag is 4:2:0, the format default.
/// Errors carry the byte offset where decoding failed.
Y4mClip read_y4m(std::span<const std::uint8_t> bytes);

/// Always writes C444, rounding to the nearest 8-bit code.
Bytes write_y4m(const Video& video, FrameRate fps = {});

/// Full-range BT.601 conversions on [0,1] RGB and 8-bit YCbCr codes.
void rgb_to_ycbcr(const float rgb[3], std::uint8_t out[3]);
void ycbcr_to_rgb(std::uint8_t y, std::uint8_t cb, std::uint8_t cr, float out[3]);

}  // namespace sparkprop::video
