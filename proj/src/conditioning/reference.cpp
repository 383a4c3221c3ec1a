#include "sparkprop/conditioning/reference.hpp"

#include <algorithm>
#include <cmath>

#include "sparkprop/degrade/filters.hpp"
#include "sparkprop/tensor/ops.hpp"
#include "sparkprop/vae/layout.hpp"

namespace sparkprop::conditioning {

namespace ops = tensor::ops;

Tensor<float> build_sparse_reference(const ReferenceBundle& refs, const KeyframeSet& keys,
                                     const tensor::Shape& lr_latent_shape, const vae::Codec& codec) {
    if (lr_latent_shape.size() != 4) throw ShapeError("latent shape must be [L, C, h, w], got " + tensor::to_string(lr_latent_shape));
    if (lr_latent_shape[1] != codec.latent_channels()) {
        throw ShapeError("latent has " + std::to_string(lr_latent_shape[1]) + " channels, codec produces " +
                         std::to_string(codec.latent_channels()));
    }
    const std::size_t frames = vae::frame_length(lr_latent_shape[0]);
    keys.validate(frames);
    for (const auto& [t, _] : refs.images) {
        if (!std::binary_search(keys.frames.begin(), keys.frames.end(), t)) {
            throw InvalidArgument("reference for frame " + std::to_string(t) + " is not a keyframe");
        }
    }
    const auto slots = keys.latent_indices();

    tensor::NoGradScope<float> no_grad;
    Tensor<float> z(lr_latent_shape);
    const std::size_t per = z.numel() / lr_latent_shape[0];
    const std::size_t f = codec.spatial_factor();
    for (std::size_t i = 0; i < keys.frames.size(); ++i) {
        const auto it = refs.images.find(keys.frames[i]);
        if (it == refs.images.end()) throw InvalidArgument("keyframe " + std::to_string(keys.frames[i]) + " has no reference");
        const auto& img = it->second;
        if (img.channels != 3 || img.height != lr_latent_shape[2] * f || img.width != lr_latent_shape[3] * f) {
            throw ShapeError("reference for frame " + std::to_string(keys.frames[i]) + " is " + std::to_string(img.height) + "x" +
                             std::to_string(img.width) + "x" + std::to_string(img.channels) + ", expected " +
                             std::to_string(lr_latent_shape[2] * f) + "x" + std::to_string(lr_latent_shape[3] * f) + "x3");
        }
        const auto enc = codec.encode_single_frame(vae::image_to_tensor(img));
        std::copy(enc.data().begin(), enc.data().end(), z.data().begin() + static_cast<std::ptrdiff_t>(slots[i] * per));
    }
    return z;
}

Tensor<float> assemble_condition(const Tensor<float>& z_lr, const Tensor<float>& z_ref) {
    if (z_lr.shape() != z_ref.shape()) {
        throw ShapeError("LR latent " + tensor::to_string(z_lr.shape()) + " and reference latent " +
                         tensor::to_string(z_ref.shape()) + " differ");
    }
    return ops::concat_channels(z_lr, z_ref);
}

std::pair<Tensor<float>, Tensor<float>> split_condition(const Tensor<float>& joint) {
    if (joint.rank() != 4 || joint.dim(1) % 2 != 0) throw ShapeError("joint latent must have an even channel count");
    const std::size_t c = joint.dim(1) / 2;
    return {ops::slice(joint, 1, 0, c), ops::slice(joint, 1, c, 2 * c)};
}

Tensor<float> apply_reference_dropout(const Tensor<float>& z_ref, double p_drop, std::mt19937_64& rng) {
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw InvalidArgument("p_drop must lie in [0, 1]");
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_drop) return Tensor<float>(z_ref.shape());
    return z_ref;
}

namespace {

double draw(std::pair<double, double> range, std::mt19937_64& rng) {
    if (range.first == range.second) return range.first;
    if (range.first > range.second) throw InvalidArgument("augmentation range is reversed");
    return std::uniform_real_distribution<double>(range.first, range.second)(rng);
}

double image_mean(const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

video::Image augment_reference(const video::Image& image, const AugmentConfig& config, std::mt19937_64& rng) {
    if (image.channels != 3) throw InvalidArgument("references must be RGB");
    video::Image out = image;
    auto& v = out.values;

    const double brightness = 1.0 + draw(config.brightness, rng);
    const double contrast = 1.0 + draw(config.contrast, rng);
    const double saturation = 1.0 + draw(config.saturation, rng);
    const double sigma = draw(config.blur_sigma, rng);
    const double noise = draw(config.noise_sigma, rng);

    if (brightness != 1.0) {
        for (auto& x : v) x = static_cast<float>(x * brightness);
    }
    if (contrast != 1.0) {
        const double m = image_mean(v);
        for (auto& x : v) x = static_cast<float>((x - m) * contrast + m);
    }
    if (saturation != 1.0) {
        for (std::size_t p = 0; p < v.size(); p += 3) {
            const double gray = (static_cast<double>(v[p]) + v[p + 1] + v[p + 2]) / 3.0;
            for (int c = 0; c < 3; ++c) v[p + c] = static_cast<float>((v[p + c] - gray) * saturation + gray);
        }
    }
    if (sigma > 0.0) out = degrade::gaussian_blur(out, sigma);
    if (noise > 0.0) {
        std::normal_distribution<double> g(0.0, noise);
        for (auto& x : out.values) x = static_cast<float>(x + g(rng));
    }
    video::clamp_unit(out.values);
    return out;
}

}  // namespace sparkprop::conditioning
