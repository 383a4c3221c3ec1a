#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sparkprop/degrade/synth.hpp"
#include "sparkprop/video/frames.hpp"

namespace sparkprop::degrade {

/// Each clip draws one blur sigma and one noise sigma uniformly from the
/// given ranges.
struct DegradationConfig {
    std::pair<double, double> blur_sigma{0.5, 1.0};
    std::size_t factor = 4;
    std::pair<double, double> noise_sigma{0.0, 0.02};
    /// 8x8 DCT quantization step as a fraction of full range; 0 disables it.
    double blockiness = 0.0;
};

/// blur -> bicubic downscale by `factor` -> additive Gaussian noise ->
/// optional blockiness -> clamp. Output is (H/factor, W/factor).
video::Video degrade_video(const video::Video& hr, const DegradationConfig& cfg, std::mt19937_64& rng);

/// Per-frame bilinear resize to (height, width).
video::Video upsample_to(const video::Video& lr, std::size_t height, std::size_t width);

struct ClipPair {
    std::string name;
    std::uint64_t seed = 0;
    video::Video hr;
    /// Degraded clip at native LR resolution.
    video::Video lr;
};

struct DatasetSpec {
    std::size_t clips = 16;
    std::size_t frames = 33;
    std::size_t height = 64;
    std::size_t width = 64;
    std::uint64_t seed = 0;
    SynthOptions synth;
    DegradationConfig degradation;
};

/// Clip i has kind i mod 3 and its own generator seeded from (seed, i), so
/// any prefix of a dataset is reproducible on its own.
std::vector<ClipPair> make_dataset(const DatasetSpec& spec);

/// Writes <name>_hr.y4m / <name>_lr.y4m pairs and a manifest with one line
/// "hr=<file>;lr=<file>;seed=<n>" per pair.
void write_dataset(const std::filesystem::path& dir, const std::vector<ClipPair>& pairs);
std::vector<ClipPair> read_dataset(const std::filesystem::path& dir);

}  // namespace sparkprop::degrade
