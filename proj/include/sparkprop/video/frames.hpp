#pragma once

#include <cstddef>
#include <vector>

#include "sparkprop/error.hpp"

namespace sparkprop::video {

/// RGB frame sequence, values in [0,1], stored frame-major then row-major
/// with interleaved channels: index ((t*H + y)*W + x)*3 + c.
struct Video {
    std::size_t frames = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;

    Video() = default;
    Video(std::size_t t, std::size_t h, std::size_t w, float fill = 0.0f)
        : frames(t), height(h), width(w), values(t * h * w * 3, fill) {}

    std::size_t frame_size() const { return height * width * 3; }
    float& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
        return values[((t * height + y) * width + x) * 3 + c];
    }
    float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return values[((t * height + y) * width + x) * 3 + c];
    }
};

/// Single image with 1 (gray) or 3 (RGB) interleaved channels, values in [0,1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    std::vector<float> values;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
        : height(h), width(w), channels(c), values(h * w * c, fill) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) { return values[(y * width + x) * channels + c]; }
    float at(std::size_t y, std::size_t x, std::size_t c) const { return values[(y * width + x) * channels + c]; }
};

Image frame_of(const Video& v, std::size_t t);
void set_frame(Video& v, std::size_t t, const Image& img);
/// Frames [begin, end) as a new clip.
Video sub_clip(const Video& v, std::size_t begin, std::size_t end);

/// Clamps every value to [0,1] and replaces NaN with 0.
void clamp_unit(std::vector<float>& values);

}  // namespace sparkprop::video
