#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sparkprop/video/mp4.hpp"

namespace sparkprop::conditioning {

enum class KeyframeOrigin { manual, iframe, random, uniform };

std::string_view origin_name(KeyframeOrigin origin);
KeyframeOrigin parse_origin(std::string_view name);

/// Smallest allowed distance between consecutive keyframes. Frames closer
/// than this could share a latent slot.
constexpr std::size_t kMinKeyframeGap = 5;

/// 0-based frame indices of the high-resolution references for one clip.
struct KeyframeSet {
    std::vector<std::size_t> frames;
    KeyframeOrigin origin = KeyframeOrigin::manual;

    /// Throws InvalidArgument unless frames are strictly increasing, < T,
    /// spaced by more than four, and at most ceil(T/4) of them.
    void validate(std::size_t clip_frames) const;
    /// Latent slots holding a reference, in order.
    std::vector<std::size_t> latent_indices() const;

    /// "k=0,48,96,144;origin=iframe".
    std::string to_text() const;
    static KeyframeSet parse(std::string_view text);

    bool operator==(const KeyframeSet&) const = default;
};

/// Largest keyframe count a clip of T frames admits: both the ceil(T/4)
/// cap and the gap rule bound it.
std::size_t max_keyframes(std::size_t clip_frames);

KeyframeSet select_manual(std::vector<std::size_t> frames, std::size_t clip_frames);
/// Sync samples inside the clip, keeping each one that is more than four
/// frames past the last kept one (and at most max_keyframes of them).
KeyframeSet select_iframes(const video::SyncSampleTable& sync, std::size_t clip_frames);
/// Uniform count in [1, max_keyframes(T)], then a uniformly random set of
/// that size among all gap-respecting sets.
KeyframeSet select_random(std::size_t clip_frames, std::mt19937_64& rng);
/// `count` frames spread evenly over [0, T-1], rounded to the nearest frame.
KeyframeSet select_uniform(std::size_t clip_frames, std::size_t count);

struct SelectionRequest {
    KeyframeOrigin strategy = KeyframeOrigin::manual;
    std::vector<std::size_t> manual;
    const video::SyncSampleTable* sync = nullptr;
    std::size_t count = 1;
};

KeyframeSet select_keyframes(const SelectionRequest& request, std::size_t clip_frames, std::mt19937_64& rng);

}  // namespace sparkprop::conditioning
