#pragma once

#include <functional>
#include <memory>
#include <random>

#include "sparkprop/conditioning/reference.hpp"
#include "sparkprop/denoiser/denoiser.hpp"
#include "sparkprop/tensor/checkpoint.hpp"
#include "sparkprop/vae/codec.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::pipeline {

/// Frozen codec and predictor loaded from one checkpoint.
struct Model {
    vae::Codec codec;
    denoiser::Denoiser denoiser;

    static std::shared_ptr<const Model> from_checkpoint(const tensor::Checkpoint& ckpt);
    static std::shared_ptr<const Model> load(const std::filesystem::path& path);
};

/// Clips are restored in windows of this many frames that overlap by one.
constexpr std::size_t kWindowFrames = 33;

struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// [0,33), [32,65), ... until the last frame is covered; one window for T <= 33.
std::vector<Window> plan_windows(std::size_t frames);

struct RestoreRequest {
    /// Low-resolution clip at its native size.
    const video::Video* lr = nullptr;
    conditioning::KeyframeSet keys;
    conditioning::ReferenceBundle refs;
    double guidance = 1.0;
    /// Output size is `upscale` times the input size.
    std::size_t upscale = 4;
};

/// Upsamples to the output grid, then restores each window (frames padded by
/// repeating the last one up to a 1 + 4k length), routing every keyframe to
/// the windows containing it. The shared frame of two windows is the average
/// of both results. `progress` receives the finished fraction after each window.
video::Video restore_video(const RestoreRequest& request, const Model& model,
                           const std::function<void(double)>& progress = {});

/// Reference images standing in for an external restorer: ground-truth frames
/// through augment_reference with a generator seeded from (seed, frame).
conditioning::ReferenceBundle oracle_references(const video::Video& gt, const conditioning::KeyframeSet& keys,
                                                const conditioning::AugmentConfig& augment, std::uint64_t seed);

}  // namespace sparkprop::pipeline
