#pragma once

#include <optional>
#include <random>
#include <string_view>
#include <utility>

#include "sparkprop/video/frames.hpp"

namespace sparkprop::degrade {

enum class ClipKind { moving_checker, drifting_text, textured_blobs };

std::string_view clip_kind_name(ClipKind kind);
ClipKind parse_clip_kind(std::string_view name);

struct SynthOptions {
    /// Global motion speed range in px/frame; the direction is uniform.
    std::pair<double, double> speed{0.5, 0.5};
    /// Fixed velocity (dx, dy) overriding the random draw.
    std::optional<std::pair<double, double>> velocity;
    /// Gaussian point-spread of the virtual camera, applied with wrap-around so
    /// clips stay exact translations of frame 0.
    double camera_blur = 1.0;
    /// Checkerboard period in px (at most 8).
    std::size_t checker_period = 8;
};

/// Procedural HR clip: a periodic canvas translated by t*(dx, dy) with wrap.
/// (T-1) must be a multiple of 4. Deterministic given the generator state.
video::Video synth_clip(ClipKind kind, std::size_t frames, std::size_t height, std::size_t width, std::mt19937_64& rng,
                        const SynthOptions& options = {});

}  // namespace sparkprop::degrade
