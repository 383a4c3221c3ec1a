#include "sparkprop/vae/layout.hpp"

#include <algorithm>
#include <cmath>

namespace sparkprop::vae {

Tensor<float> to_tensor(const video::Video& v) {
    Tensor<float> out(tensor::Shape{v.frames, 3, v.height, v.width});
    auto dst = out.data();
    const std::size_t plane = v.height * v.width;
    for (std::size_t t = 0; t < v.frames; ++t)
        for (std::size_t i = 0; i < plane; ++i)
            for (std::size_t c = 0; c < 3; ++c) dst[(t * 3 + c) * plane + i] = v.values[(t * plane + i) * 3 + c];
    return out;
}

video::Video to_video(const Tensor<float>& t) {
    if (t.rank() != 4 || t.dim(1) != 3) throw ShapeError("expected a [T, 3, H, W] tensor, got " + tensor::to_string(t.shape()));
    video::Video v(t.dim(0), t.dim(2), t.dim(3));
    auto src = t.data();
    const std::size_t plane = v.height * v.width;
    for (std::size_t f = 0; f < v.frames; ++f)
        for (std::size_t i = 0; i < plane; ++i)
            for (std::size_t c = 0; c < 3; ++c) {
                const float x = src[(f * 3 + c) * plane + i];
                v.values[(f * plane + i) * 3 + c] = std::isnan(x) ? 0.0f : std::clamp(x, 0.0f, 1.0f);
            }
    return v;
}

Tensor<float> image_to_tensor(const video::Image& img) {
    if (img.channels != 3) throw InvalidArgument("expected an RGB image");
    video::Video v(1, img.height, img.width);
    v.values = img.values;
    return to_tensor(v);
}

}  // namespace sparkprop::vae
