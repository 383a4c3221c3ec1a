#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sparkprop/conditioning/reference.hpp"
#include "sparkprop/degrade/degrade.hpp"
#include "sparkprop/denoiser/denoiser.hpp"
#include "sparkprop/tensor/adamw.hpp"
#include "sparkprop/train/losses.hpp"
#include "sparkprop/vae/codec.hpp"

namespace sparkprop::train {

struct TrainConfig {
    int stage = 1;
    std::size_t iterations = 1500;
    double lr = 1e-3;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double p_drop = 0.1;
    /// Probability that a stage-2 step is a video step.
    double phi = 0.5;
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    /// 0 disables periodic checkpoints.
    std::size_t checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;
    std::filesystem::path log_path;
    conditioning::AugmentConfig augment;
    denoiser::DenoiserConfig model;
    std::uint64_t filter_seed = 5;

    void validate() const;
    /// Flat key=value lines; unknown keys are rejected.
    static TrainConfig parse(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    std::string to_text() const;
    /// SHA-256 of the settings that change the trajectory (iterations,
    /// paths and checkpoint cadence excluded), so a run may be extended.
    std::string hash() const;
};

/// One clip prepared for training: pixels plus frozen-codec latents.
struct Example {
    video::Video hr;
    /// LR clip resized back to the HR grid.
    video::Video lr_up;
    Tensor<float> hr_pixels;  // [T, 3, H, W]
    Tensor<float> z_hr;
    Tensor<float> z_lr;
};

std::vector<Example> prepare_examples(const std::vector<degrade::ClipPair>& pairs, const vae::Codec& codec);

struct StepResult {
    double loss = 0.0;
    double mse = 0.0;
    double dists = 0.0;
    double frame = 0.0;
    bool video_step = true;
    /// Loss or gradient was non-finite; parameters were left unchanged.
    bool skipped = false;
    /// Whether every image-step reference channel fed to the model was zero.
    bool zero_reference = false;
};

/// Trainable state: the model plus its optimizer.
struct Learner {
    denoiser::Denoiser model;
    tensor::AdamWState optimizer;
};

Learner make_learner(const TrainConfig& cfg);

/// Random keyframes, augmented references and reference dropout for one clip.
Tensor<float> sample_reference(const Example& ex, const vae::Codec& codec, const TrainConfig& cfg, std::mt19937_64& rng);

/// Latent MSE between the prediction and the HR latent, averaged over
/// `cfg.batch` clips drawn with replacement; one AdamW update.
StepResult stage1_step(const std::vector<Example>& data, Learner& learner, const vae::Codec& codec, const TrainConfig& cfg,
                       std::mt19937_64& rng);

/// With probability phi a video step (decoded prediction against the HR clip
/// under the composite loss), otherwise an image step on one frame with a zero
/// reference (mse + lambda1 * dists).
StepResult stage2_step(const std::vector<Example>& data, Learner& learner, const vae::Codec& codec, const TrainConfig& cfg,
                       const FilterBank& bank, std::mt19937_64& rng);

/// Generator for iteration `it` of `stage`; seeding per iteration makes a
/// resumed run replay the same draws as an uninterrupted one.
std::mt19937_64 iteration_rng(std::uint64_t seed, int stage, std::size_t it);

struct RunHooks {
    std::function<void(std::size_t, const StepResult&)> on_step;
};

/// Runs cfg.stage up to cfg.iterations total iterations and returns the final
/// checkpoint (codec, model, optimizer moments and metadata).
///
/// Stage 1 starts fresh or continues a stage-1 checkpoint. Stage 2 needs a
/// checkpoint: a stage-1 one seeds the model and moments, a stage-2 one is
/// continued. Continuing requires the same config hash.
tensor::Checkpoint train_run(const TrainConfig& cfg, const std::vector<Example>& data, const vae::Codec& codec,
                             const std::optional<tensor::Checkpoint>& resume, const RunHooks& hooks = {});

/// Model checkpoint helpers shared by training and inference.
tensor::Checkpoint make_checkpoint(const Learner& learner, const vae::Codec& codec, const TrainConfig& cfg, int stage,
                                   std::size_t iteration);
Learner learner_from_checkpoint(const tensor::Checkpoint& ckpt, const TrainConfig& cfg);

}  // namespace sparkprop::train
