#pragma once

#include <cstdint>
#include <optional>

#include "sparkprop/nn/params.hpp"
#include "sparkprop/tensor/checkpoint.hpp"
#include "sparkprop/vae/codec.hpp"

namespace sparkprop::denoiser {

using tensor::Tensor;

/// The single timestep the one-step predictor is trained and run at.
constexpr int kTimestep = 399;

struct DenoiserConfig {
    std::size_t latent_channels = 16;
    std::size_t width = 64;
    std::size_t blocks = 4;
    std::size_t temporal_kernel = 3;
    std::size_t groups = 8;
};

/// One-step latent predictor over the joint [Z_LR, Z_ref] latent:
///   h = conv3x3(z_in) + e_t
///   h += conv3d(silu(gn(conv3d(silu(gn(h)))))) per block (causal in time)
///   out = Z_LR + conv3x3(silu(h))
/// The output projection starts at zero, so an untrained model returns Z_LR.
class Denoiser {
public:
    static Denoiser create(const DenoiserConfig& config, std::uint64_t seed);

    /// [L, 2C, h, w] -> [L, C, h, w]. Only t == 399 is accepted.
    Tensor<float> predict(const Tensor<float>& z_in, int t = kTimestep) const;

    const DenoiserConfig& config() const { return config_; }
    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    void save(tensor::Checkpoint& ckpt) const;
    static Denoiser load(const tensor::Checkpoint& ckpt);

private:
    Denoiser() = default;
    DenoiserConfig config_;
    nn::ParamSet params_;
};

struct GuidanceConfig {
    double scale = 1.0;
    void validate() const;
};

/// uncond + s * (cond - uncond), evaluated in double per element. s == 0 and
/// s == 1 return the corresponding input exactly.
Tensor<float> rfg_combine(const Tensor<float>& cond, const Tensor<float>& uncond, double s);

struct Restoration {
    Tensor<float> latent;
    video::Video video;
    std::size_t predict_calls = 0;
};

/// Guided prediction from the conditional input [z_lr, z_ref] and the
/// unconditional input [z_lr, 0]. A scale of 1 needs only the conditional
/// pass, and an all-zero z_ref only the unconditional one.
Tensor<float> guided_latent(const Tensor<float>& z_lr, const Tensor<float>& z_ref, const GuidanceConfig& guidance,
                            const Denoiser& model, std::size_t* predict_calls = nullptr);

/// guided_latent followed by decoding to a clamped video.
Restoration restore(const Tensor<float>& z_lr, const Tensor<float>& z_ref, const GuidanceConfig& guidance,
                    const Denoiser& model, const vae::Codec& codec);

}  // namespace sparkprop::denoiser
