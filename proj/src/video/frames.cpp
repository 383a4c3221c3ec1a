#include "sparkprop/video/frames.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sparkprop::video {

Image frame_of(const Video& v, std::size_t t) {
    if (t >= v.frames) throw InvalidArgument("frame " + std::to_string(t) + " out of range for a " +
                                             std::to_string(v.frames) + "-frame clip");
    Image img(v.height, v.width, 3);
    const auto first = v.values.begin() + static_cast<std::ptrdiff_t>(t * v.frame_size());
    std::copy(first, first + static_cast<std::ptrdiff_t>(v.frame_size()), img.values.begin());
    return img;
}

void set_frame(Video& v, std::size_t t, const Image& img) {
    if (t >= v.frames || img.height != v.height || img.width != v.width || img.channels != 3) {
        throw InvalidArgument("set_frame: image does not fit the clip");
    }
    std::copy(img.values.begin(), img.values.end(), v.values.begin() + static_cast<std::ptrdiff_t>(t * v.frame_size()));
}

Video sub_clip(const Video& v, std::size_t begin, std::size_t end) {
    if (begin >= end || end > v.frames) throw InvalidArgument("sub_clip: bad frame range");
    Video out(end - begin, v.height, v.width);
    std::copy(v.values.begin() + static_cast<std::ptrdiff_t>(begin * v.frame_size()),
              v.values.begin() + static_cast<std::ptrdiff_t>(end * v.frame_size()), out.values.begin());
    return out;
}

void clamp_unit(std::vector<float>& values) {
    for (auto& x : values) x = std::isnan(x) ? 0.0f : std::clamp(x, 0.0f, 1.0f);
}

}  // namespace sparkprop::video
