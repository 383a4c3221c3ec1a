#pragma once

#include <span>

#include "sparkprop/bytes.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::video {

// Binary PPM (P6) and PGM (P5) with maxval 255. Values are rounded to the
// nearest 8-bit code on write and mapped to code/255 on read.

Bytes write_ppm(const Image& rgb);
Bytes write_pgm(const Image& gray);
Image read_ppm(std::span<const std::uint8_t> bytes);
Image read_pgm(std::span<const std::uint8_t> bytes);
/// Accepts either variant; the result has 1 or 3 channels accordingly.
Image read_pnm(std::span<const std::uint8_t> bytes);

}  // namespace sparkprop::video
