#include "sparkprop/pipeline/benchmark.hpp"

#include <cmath>

#include "sparkprop/eval/metrics.hpp"
#include "sparkprop/vae/layout.hpp"

namespace sparkprop::pipeline {

namespace {

std::vector<degrade::ClipPair> pairs(const ToyRecipe& r, std::size_t clips, std::uint64_t seed) {
    degrade::DatasetSpec spec;
    spec.clips = clips;
    spec.frames = r.frames;
    spec.height = r.height;
    spec.width = r.width;
    spec.seed = seed;
    spec.degradation = r.degradation;
    return degrade::make_dataset(spec);
}

std::vector<video::Video> hr_only(std::vector<degrade::ClipPair> p) {
    std::vector<video::Video> out;
    for (auto& c : p) out.push_back(std::move(c.hr));
    return out;
}

std::uint64_t clip_seed(std::uint64_t seed, std::size_t clip) { return seed * 1000003ULL + clip; }

}  // namespace

std::vector<video::Video> ToyRecipe::codec_set() const { return hr_only(pairs(*this, codec_clips, codec_seed)); }
std::vector<video::Video> ToyRecipe::codec_eval_set() const {
    return hr_only(pairs(*this, codec_eval_clips, codec_eval_seed));
}
std::vector<degrade::ClipPair> ToyRecipe::train_set() const { return pairs(*this, train_clips, train_seed); }
std::vector<degrade::ClipPair> ToyRecipe::eval_set() const { return pairs(*this, eval_clips, eval_seed); }

double codec_psnr(const vae::Codec& codec, const std::vector<video::Video>& clips) {
    if (clips.empty()) throw InvalidArgument("codec_psnr needs at least one clip");
    double total = 0.0;
    for (const auto& v : clips) {
        const auto y = vae::to_video(codec.decode(codec.encode(vae::to_tensor(v))));
        total += eval::psnr(y, v);
    }
    return total / static_cast<double>(clips.size());
}

std::vector<ConditionScore> evaluate_conditions(const Model& model, const std::vector<degrade::ClipPair>& clips,
                                                const std::vector<ConditionSpec>& conditions,
                                                const conditioning::AugmentConfig& augment, std::uint64_t seed) {
    if (clips.empty()) throw InvalidArgument("evaluate_conditions needs at least one clip");
    std::vector<ConditionScore> out;
    for (const auto& cond : conditions) {
        ConditionScore score{cond.name, 0.0, 0.0};
        for (std::size_t i = 0; i < clips.size(); ++i) {
            const auto& c = clips[i];
            RestoreRequest req;
            req.lr = &c.lr;
            req.keys = conditioning::KeyframeSet{cond.keyframes, conditioning::KeyframeOrigin::manual};
            req.refs = oracle_references(c.hr, req.keys, augment, clip_seed(seed, i));
            req.guidance = cond.guidance;
            req.upscale = c.hr.height / c.lr.height;
            const auto pred = restore_video(req, model);
            score.psnr_db += eval::psnr(pred, c.hr);
            score.flicker += eval::flicker_index(pred, c.hr);
        }
        score.psnr_db /= static_cast<double>(clips.size());
        score.flicker /= static_cast<double>(clips.size());
        out.push_back(score);
    }
    return out;
}

std::vector<GuidancePoint> guidance_sweep(const Model& model, const std::vector<degrade::ClipPair>& clips,
                                          const std::vector<std::size_t>& keyframes, const std::vector<double>& scales,
                                          const conditioning::AugmentConfig& augment, std::uint64_t seed) {
    if (clips.empty()) throw InvalidArgument("guidance_sweep needs at least one clip");
    std::vector<GuidancePoint> out;
    for (double s : scales) out.push_back({s, 0.0, 0.0});
    const conditioning::KeyframeSet keys{keyframes, conditioning::KeyframeOrigin::manual};
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto& c = clips[i];
        if (c.hr.frames > kWindowFrames) throw InvalidArgument("guidance_sweep works on single-window clips");
        const auto up = degrade::upsample_to(c.lr, c.hr.height, c.hr.width);
        const auto z_lr = model.codec.encode_video(up);
        const auto refs = oracle_references(c.hr, keys, augment, clip_seed(seed, i));
        const auto z_ref = conditioning::build_sparse_reference(refs, keys, z_lr.shape(), model.codec);
        const auto cond = denoiser::guided_latent(z_lr, z_ref, {1.0}, model.denoiser);
        for (auto& point : out) {
            const auto v = denoiser::guided_latent(z_lr, z_ref, {point.scale}, model.denoiser);
            double d = 0.0;
            for (std::size_t k = 0; k < v.numel(); ++k) {
                const double e = static_cast<double>(v.data()[k]) - cond.data()[k];
                d += e * e;
            }
            point.latent_distance += std::sqrt(d / static_cast<double>(v.numel()));
            point.psnr_db += eval::psnr(vae::to_video(model.codec.decode(v)), c.hr);
        }
    }
    for (auto& point : out) {
        point.psnr_db /= static_cast<double>(clips.size());
        point.latent_distance /= static_cast<double>(clips.size());
    }
    return out;
}

}  // namespace sparkprop::pipeline
