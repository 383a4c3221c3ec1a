#include "sparkprop/conditioning/keyframes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sparkprop/error.hpp"
#include "sparkprop/vae/codec.hpp"

namespace sparkprop::conditioning {

std::string_view origin_name(KeyframeOrigin origin) {
    switch (origin) {
        case KeyframeOrigin::manual: return "manual";
        case KeyframeOrigin::iframe: return "iframe";
        case KeyframeOrigin::random: return "random";
        case KeyframeOrigin::uniform: return "uniform";
    }
    return "manual";
}

KeyframeOrigin parse_origin(std::string_view name) {
    for (auto o : {KeyframeOrigin::manual, KeyframeOrigin::iframe, KeyframeOrigin::random, KeyframeOrigin::uniform}) {
        if (origin_name(o) == name) return o;
    }
    throw InvalidArgument("unknown keyframe origin '" + std::string(name) + "'");
}

std::size_t max_keyframes(std::size_t clip_frames) {
    if (clip_frames == 0) return 0;
    return std::min((clip_frames + 3) / 4, (clip_frames - 1) / kMinKeyframeGap + 1);
}

void KeyframeSet::validate(std::size_t clip_frames) const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i] >= clip_frames) {
            throw InvalidArgument("keyframe " + std::to_string(frames[i]) + " is outside the clip of " +
                                  std::to_string(clip_frames) + " frames");
        }
        if (i > 0 && frames[i] <= frames[i - 1]) throw InvalidArgument("keyframes must be strictly increasing");
        if (i > 0 && frames[i] - frames[i - 1] < kMinKeyframeGap) {
            throw InvalidArgument("keyframes " + std::to_string(frames[i - 1]) + " and " + std::to_string(frames[i]) +
                                  " are " + std::to_string(frames[i] - frames[i - 1]) + " apart; the gap must exceed 4");
        }
    }
    if (frames.size() > (clip_frames + 3) / 4) {
        throw InvalidArgument(std::to_string(frames.size()) + " keyframes exceed the limit of " +
                              std::to_string((clip_frames + 3) / 4));
    }
}

std::vector<std::size_t> KeyframeSet::latent_indices() const {
    std::vector<std::size_t> out;
    for (auto t : frames) {
        const auto l = vae::latent_index_of(t);
        if (!out.empty() && out.back() == l) {
            throw Conflict("keyframes share latent slot " + std::to_string(l));
        }
        out.push_back(l);
    }
    return out;
}

std::string KeyframeSet::to_text() const {
    std::string s = "k=";
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(frames[i]);
    }
    s += ";origin=";
    s += origin_name(origin);
    return s;
}

KeyframeSet KeyframeSet::parse(std::string_view text) {
    KeyframeSet out;
    bool saw_k = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find(';', pos), text.size());
        const auto field = text.substr(pos, end - pos);
        pos = end + 1;
        if (field.empty()) continue;
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) throw InvalidArgument("keyframe field '" + std::string(field) + "' has no '='");
        const auto key = field.substr(0, eq);
        const auto value = field.substr(eq + 1);
        if (key == "k") {
            saw_k = true;
            std::size_t p = 0;
            while (p < value.size()) {
                const auto comma = std::min(value.find(',', p), value.size());
                const auto item = value.substr(p, comma - p);
                if (item.empty() || !std::all_of(item.begin(), item.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                    throw InvalidArgument("bad keyframe index '" + std::string(item) + "'");
                }
                out.frames.push_back(std::stoul(std::string(item)));
                p = comma + 1;
            }
        } else if (key == "origin") {
            out.origin = parse_origin(value);
        } else {
            throw InvalidArgument("unknown keyframe field '" + std::string(key) + "'");
        }
    }
    if (!saw_k) throw InvalidArgument("keyframe text lacks a 'k=' field");
    return out;
}

KeyframeSet select_manual(std::vector<std::size_t> frames, std::size_t clip_frames) {
    KeyframeSet set{std::move(frames), KeyframeOrigin::manual};
    set.validate(clip_frames);
    return set;
}

KeyframeSet select_iframes(const video::SyncSampleTable& sync, std::size_t clip_frames) {
    if (sync.empty()) throw InvalidArgument("sync-sample table is empty");
    KeyframeSet set{{}, KeyframeOrigin::iframe};
    const std::size_t cap = max_keyframes(clip_frames);
    for (auto t : sync) {
        if (t >= clip_frames || set.frames.size() == cap) break;
        if (set.frames.empty() || t >= set.frames.back() + kMinKeyframeGap) set.frames.push_back(t);
    }
    if (set.frames.empty()) throw InvalidArgument("no sync sample falls inside the clip");
    set.validate(clip_frames);
    return set;
}

KeyframeSet select_random(std::size_t clip_frames, std::mt19937_64& rng) {
    if (clip_frames == 0) throw InvalidArgument("clip must have at least one frame");
    const std::size_t kmax = max_keyframes(clip_frames);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, kmax)(rng);
    // Removing (gap-1) frames after each of the first k-1 keys maps gap-respecting
    // sets one-to-one onto plain k-subsets of a shorter range.
    const std::size_t span = clip_frames - (kMinKeyframeGap - 1) * (k - 1);
    std::vector<std::size_t> pool(span);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::swap(pool[i], pool[std::uniform_int_distribution<std::size_t>(i, span - 1)(rng)]);
    }
    std::vector<std::size_t> picked(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(picked.begin(), picked.end());
    for (std::size_t i = 0; i < k; ++i) picked[i] += (kMinKeyframeGap - 1) * i;
    KeyframeSet set{std::move(picked), KeyframeOrigin::random};
    set.validate(clip_frames);
    return set;
}

KeyframeSet select_uniform(std::size_t clip_frames, std::size_t count) {
    if (count == 0) throw InvalidArgument("uniform selection needs a positive count");
    if (clip_frames == 0) throw InvalidArgument("clip must have at least one frame");
    KeyframeSet set{{}, KeyframeOrigin::uniform};
    for (std::size_t i = 0; i < count; ++i) {
        const double pos = count == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(clip_frames - 1) / static_cast<double>(count - 1);
        set.frames.push_back(static_cast<std::size_t>(std::lround(pos)));
    }
    set.validate(clip_frames);
    return set;
}

KeyframeSet select_keyframes(const SelectionRequest& request, std::size_t clip_frames, std::mt19937_64& rng) {
    switch (request.strategy) {
        case KeyframeOrigin::manual: return select_manual(request.manual, clip_frames);
        case KeyframeOrigin::iframe:
            if (!request.sync) throw InvalidArgument("iframe selection needs a sync-sample table");
            return select_iframes(*request.sync, clip_frames);
        case KeyframeOrigin::random: return select_random(clip_frames, rng);
        case KeyframeOrigin::uniform: return select_uniform(clip_frames, request.count);
    }
    throw InvalidArgument("unknown selection strategy");
}

}  // namespace sparkprop::conditioning
