#pragma once

#include "sparkprop/tensor/tensor.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::vae {

using tensor::Tensor;

/// Interleaved T x H x W x 3 video to a planar [T, 3, H, W] tensor.
Tensor<float> to_tensor(const video::Video& v);
/// Planar [T, 3, H, W] back to a video, clamping to [0,1].
video::Video to_video(const Tensor<float>& t);
/// Single image as a [1, 3, H, W] tensor.
Tensor<float> image_to_tensor(const video::Image& img);

}  // namespace sparkprop::vae
