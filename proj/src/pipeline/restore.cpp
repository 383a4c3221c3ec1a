#include "sparkprop/pipeline/restore.hpp"

#include "sparkprop/degrade/degrade.hpp"
#include "sparkprop/vae/layout.hpp"

namespace sparkprop::pipeline {

std::shared_ptr<const Model> Model::from_checkpoint(const tensor::Checkpoint& ckpt) {
    auto m = std::make_shared<Model>(Model{vae::Codec::load(ckpt), denoiser::Denoiser::load(ckpt)});
    if (m->denoiser.config().latent_channels != m->codec.latent_channels()) {
        throw Conflict("checkpoint pairs a " + std::to_string(m->codec.latent_channels()) + "-channel codec with a " +
                       std::to_string(m->denoiser.config().latent_channels) + "-channel predictor");
    }
    return m;
}

std::shared_ptr<const Model> Model::load(const std::filesystem::path& path) {
    return from_checkpoint(tensor::Checkpoint::load(path));
}

std::vector<Window> plan_windows(std::size_t frames) {
    if (frames == 0) throw InvalidArgument("cannot restore an empty clip");
    std::vector<Window> out;
    std::size_t begin = 0;
    while (true) {
        const std::size_t end = std::min(frames, begin + kWindowFrames);
        out.push_back({begin, end});
        if (end == frames) break;
        begin = end - 1;
    }
    return out;
}

video::Video restore_video(const RestoreRequest& req, const Model& model, const std::function<void(double)>& progress) {
    if (!req.lr || req.lr->frames == 0) throw InvalidArgument("restore needs a non-empty input clip");
    if (req.upscale == 0) throw InvalidArgument("upscale must be positive");
    const auto& lr = *req.lr;
    const std::size_t h = lr.height * req.upscale, w = lr.width * req.upscale, f = model.codec.spatial_factor();
    if (h % f != 0 || w % f != 0) {
        throw InvalidArgument("output size " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by " +
                              std::to_string(f));
    }
    req.keys.validate(lr.frames);
    for (auto t : req.keys.frames) {
        if (!req.refs.images.count(t)) throw InvalidArgument("keyframe " + std::to_string(t) + " has no reference");
    }
    const video::Video up = req.upscale == 1 ? lr : degrade::upsample_to(lr, h, w);

    video::Video out(lr.frames, h, w);
    const auto windows = plan_windows(lr.frames);
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const auto [begin, end] = windows[wi];
        const std::size_t n = end - begin;
        const std::size_t padded = 1 + 4 * ((n - 1 + 3) / 4);
        video::Video clip(padded, h, w);
        for (std::size_t t = 0; t < padded; ++t) {
            const std::size_t src = begin + std::min(t, n - 1);
            std::copy_n(up.values.begin() + static_cast<std::ptrdiff_t>(src * up.frame_size()), up.frame_size(),
                        clip.values.begin() + static_cast<std::ptrdiff_t>(t * clip.frame_size()));
        }
        conditioning::KeyframeSet local{{}, req.keys.origin};
        conditioning::ReferenceBundle refs;
        for (auto t : req.keys.frames) {
            if (t < begin || t >= end) continue;
            local.frames.push_back(t - begin);
            refs.images[t - begin] = req.refs.images.at(t);
        }
        const auto z_lr = model.codec.encode_video(clip);
        const auto z_ref = conditioning::build_sparse_reference(refs, local, z_lr.shape(), model.codec);
        const auto result = denoiser::restore(z_lr, z_ref, denoiser::GuidanceConfig{req.guidance}, model.denoiser, model.codec);
        const std::size_t fs = out.frame_size();
        for (std::size_t t = 0; t < n; ++t) {
            const float* src = result.video.values.data() + t * fs;
            float* dst = out.values.data() + (begin + t) * fs;
            if (t == 0 && wi > 0) {
                for (std::size_t i = 0; i < fs; ++i) dst[i] = 0.5f * (dst[i] + src[i]);
            } else {
                std::copy_n(src, fs, dst);
            }
        }
        if (progress) progress(static_cast<double>(wi + 1) / static_cast<double>(windows.size()));
    }
    return out;
}

conditioning::ReferenceBundle oracle_references(const video::Video& gt, const conditioning::KeyframeSet& keys,
                                                const conditioning::AugmentConfig& augment, std::uint64_t seed) {
    conditioning::ReferenceBundle refs;
    for (auto t : keys.frames) {
        if (t >= gt.frames) throw InvalidArgument("keyframe " + std::to_string(t) + " is beyond the ground-truth clip");
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(t)};
        std::mt19937_64 rng(seq);
        refs.images[t] = conditioning::augment_reference(video::frame_of(gt, t), augment, rng);
    }
    return refs;
}

}  // namespace sparkprop::pipeline
