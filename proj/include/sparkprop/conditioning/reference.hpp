#pragma once

#include <map>
#include <random>
#include <string>
#include <utility>

#include "sparkprop/conditioning/keyframes.hpp"
#include "sparkprop/vae/codec.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::conditioning {

using tensor::Tensor;

/// Text that would accompany a reference to an external image restorer.
/// Carried through untouched.
struct Prompt {
    std::string task;
    std::string content;
};

struct ReferenceBundle {
    std::map<std::size_t, video::Image> images;
    std::map<std::size_t, Prompt> prompts;
};

/// Reference latent with the shape of `lr_latent_shape` ([L, C, h, w]): the
/// slot of each keyframe holds the single-frame encoding of its reference,
/// every other slot is exactly zero. Every keyframe needs a reference and
/// every reference must be a keyframe.
Tensor<float> build_sparse_reference(const ReferenceBundle& refs, const KeyframeSet& keys,
                                     const tensor::Shape& lr_latent_shape, const vae::Codec& codec);

/// Channel concatenation [Z_LR, Z_ref].
Tensor<float> assemble_condition(const Tensor<float>& z_lr, const Tensor<float>& z_ref);
/// Inverse of assemble_condition.
std::pair<Tensor<float>, Tensor<float>> split_condition(const Tensor<float>& joint);

/// With probability p_drop returns an all-zero tensor of the same shape.
/// One draw per call: all references go together.
Tensor<float> apply_reference_dropout(const Tensor<float>& z_ref, double p_drop, std::mt19937_64& rng);

/// Ranges are deviations: a brightness draw b scales by (1 + b), so an all-zero
/// config is the identity.
struct AugmentConfig {
    std::pair<double, double> brightness{-0.1, 0.1};
    std::pair<double, double> contrast{-0.1, 0.1};
    std::pair<double, double> saturation{-0.1, 0.1};
    std::pair<double, double> blur_sigma{0.0, 1.0};
    std::pair<double, double> noise_sigma{0.0, 0.02};

    static AugmentConfig identity() { return {{0, 0}, {0, 0}, {0, 0}, {0, 0}, {0, 0}}; }
};

/// Colour jitter, then Gaussian blur, then additive Gaussian noise, then
/// clamping. Each factor draw equal to the identity skips its step, which
/// keeps the identity config bit-exact.
video::Image augment_reference(const video::Image& image, const AugmentConfig& config, std::mt19937_64& rng);

}  // namespace sparkprop::conditioning
