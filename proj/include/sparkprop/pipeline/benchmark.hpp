#pragma once

#include <string>
#include <vector>

#include "sparkprop/degrade/degrade.hpp"
#include "sparkprop/pipeline/restore.hpp"

namespace sparkprop::pipeline {

/// The synthetic setup used for codec pretraining, toy training and the
/// held-out comparisons. Each split has its own seed so they never overlap.
struct ToyRecipe {
    std::size_t frames = 33;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t codec_clips = 48;
    std::uint64_t codec_seed = 101;
    std::size_t train_clips = 16;
    std::uint64_t train_seed = 0;
    std::size_t eval_clips = 6;
    std::uint64_t eval_seed = 1000;
    std::size_t codec_eval_clips = 6;
    std::uint64_t codec_eval_seed = 2000;
    degrade::DegradationConfig degradation;

    std::vector<video::Video> codec_set() const;
    std::vector<video::Video> codec_eval_set() const;
    std::vector<degrade::ClipPair> train_set() const;
    std::vector<degrade::ClipPair> eval_set() const;
};

/// Mean over clips of PSNR(decode(encode(x)), x).
double codec_psnr(const vae::Codec& codec, const std::vector<video::Video>& clips);

struct ConditionSpec {
    std::string name;
    /// Empty means no references (Z_ref = 0).
    std::vector<std::size_t> keyframes;
    double guidance = 1.0;
};

struct ConditionScore {
    std::string name;
    double psnr_db = 0.0;
    double flicker = 0.0;
};

/// Restores every held-out clip under each condition with oracle references
/// (seeded from `seed` and the clip index) and averages PSNR and flicker index
/// over clips.
std::vector<ConditionScore> evaluate_conditions(const Model& model, const std::vector<degrade::ClipPair>& clips,
                                                const std::vector<ConditionSpec>& conditions,
                                                const conditioning::AugmentConfig& augment, std::uint64_t seed);

struct GuidancePoint {
    double scale = 0.0;
    double psnr_db = 0.0;
    /// Mean over clips of ||v(s) - v(1)|| / sqrt(numel): distance of the guided
    /// latent to the purely conditional prediction.
    double latent_distance = 0.0;
};

std::vector<GuidancePoint> guidance_sweep(const Model& model, const std::vector<degrade::ClipPair>& clips,
                                          const std::vector<std::size_t>& keyframes, const std::vector<double>& scales,
                                          const conditioning::AugmentConfig& augment, std::uint64_t seed);

}  // namespace sparkprop::pipeline
