#pragma once

#include <cstddef>

#include "sparkprop/video/frames.hpp"

namespace sparkprop::degrade {

enum class Border { reflect, wrap };

/// Separable Gaussian blur with radius ceil(3*sigma); sigma <= 0 is a no-op.
video::Image gaussian_blur(const video::Image& img, double sigma, Border border = Border::reflect);

/// Bicubic resampling (a = -0.75, half-pixel centres, clamped borders, no
/// antialiasing), the convention of common deep-learning toolkits.
video::Image resize_bicubic(const video::Image& img, std::size_t height, std::size_t width);

/// Bilinear resampling with half-pixel centres and clamped borders.
video::Image resize_bilinear(const video::Image& img, std::size_t height, std::size_t width);

}  // namespace sparkprop::degrade
