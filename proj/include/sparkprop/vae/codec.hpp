#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sparkprop/nn/params.hpp"
#include "sparkprop/tensor/adamw.hpp"
#include "sparkprop/tensor/checkpoint.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::vae {

using tensor::Tensor;

constexpr std::size_t kTemporalFactor = 4;

/// Latent slot of frame t: frame 0 has its own slot, then groups of four.
std::size_t latent_index_of(std::size_t frame, std::size_t temporal_factor = kTemporalFactor);
/// 1 + (T-1)/4; throws InvalidArgument unless (T-1) is a multiple of 4.
std::size_t latent_length(std::size_t frames);
std::size_t frame_length(std::size_t latents);

enum class CodecMode { analytic, learned };

/// Causal video autoencoder. Frames are first gathered into causal groups
/// (frame 0 alone, padded by replication to four slots, then frames
/// 1-4, 5-8, ...) and each group is folded space-to-depth by the spatial
/// factor f_s, giving 4 * 3 * f_s^2 channels on an (H/f_s, W/f_s) grid.
///
/// Analytic mode stops there and is exactly invertible. Learned mode maps the
/// folded groups to C channels with a linear path plus a small convolutional
/// residual, and back. Groups are processed independently, so no latent
/// frame depends on frames after its group.
class Codec {
public:
    static Codec analytic(std::size_t spatial_factor = 4);
    static Codec learned(std::size_t spatial_factor, std::size_t latent_channels, std::uint64_t seed,
                         std::size_t hidden = 64);

    CodecMode mode() const { return mode_; }
    std::size_t spatial_factor() const { return spatial_factor_; }
    std::size_t latent_channels() const;
    std::size_t folded_channels() const { return kTemporalFactor * 3 * spatial_factor_ * spatial_factor_; }

    /// [T, 3, H, W] -> [L, C, H/f_s, W/f_s].
    Tensor<float> encode(const Tensor<float>& video) const;
    /// [L, C, h, w] -> [1 + (L-1)*4, 3, h*f_s, w*f_s]; unclamped so that it can
    /// sit inside a loss.
    Tensor<float> decode(const Tensor<float>& latent) const;
    /// Encoder path of a one-frame clip: [3, H, W] or [1, 3, H, W] -> [1, C, h, w].
    Tensor<float> encode_single_frame(const Tensor<float>& image) const;

    Tensor<float> encode_video(const video::Video& v) const;
    video::Video decode_video(const Tensor<float>& latent) const;

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

    /// Stores mode, geometry and (learned) weights under "codec.".
    void save(tensor::Checkpoint& ckpt) const;
    static Codec load(const tensor::Checkpoint& ckpt);

private:
    Codec() = default;
    void check_video(const Tensor<float>& video) const;
    Tensor<float> fold(const Tensor<float>& video) const;
    Tensor<float> unfold(const Tensor<float>& folded) const;

    CodecMode mode_ = CodecMode::analytic;
    std::size_t spatial_factor_ = 4;
    std::size_t latent_channels_ = 0;
    std::size_t hidden_ = 0;
    nn::ParamSet params_;
};

struct PretrainConfig {
    std::size_t iterations = 2000;
    double lr = 2e-3;
    std::size_t batch = 4;
    std::size_t spatial_factor = 4;
    std::size_t latent_channels = 16;
    std::size_t hidden = 64;
    std::uint64_t seed = 0;
    CodecMode mode = CodecMode::learned;
};

struct PretrainResult {
    Codec codec;
    std::vector<double> losses;
    /// Set when a loss went non-finite; `codec` then holds the last finite parameters.
    bool diverged = false;
};

/// Minimizes the pixel MSE of decode(encode(x)) over `clips` with AdamW,
/// visiting clips round-robin, `batch` clips per iteration. `on_iteration`
/// (optional) receives (iteration, loss).
PretrainResult pretrain_codec(const std::vector<video::Video>& clips, const PretrainConfig& cfg,
                              const std::function<void(std::size_t, double)>& on_iteration = {});

}  // namespace sparkprop::vae
