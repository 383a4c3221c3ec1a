#include "sparkprop/denoiser/denoiser.hpp"

#include <cmath>
#include <random>
#include <string>

#include "sparkprop/conditioning/reference.hpp"
#include "sparkprop/tensor/ops.hpp"

namespace sparkprop::denoiser {

namespace ops = tensor::ops;
using tensor::Shape;

namespace {

std::string block_name(std::size_t b, const char* leaf) { return "block" + std::to_string(b) + "." + leaf; }

}  // namespace

Denoiser Denoiser::create(const DenoiserConfig& config, std::uint64_t seed) {
    if (config.latent_channels == 0 || config.width == 0 || config.blocks == 0) {
        throw InvalidArgument("denoiser dimensions must be positive");
    }
    if (config.width % config.groups != 0) throw InvalidArgument("width must be divisible by the group count");
    if (config.temporal_kernel == 0) throw InvalidArgument("temporal kernel must be positive");
    Denoiser d;
    d.config_ = config;
    std::mt19937_64 rng(seed);
    const std::size_t c2 = 2 * config.latent_channels, w = config.width, kt = config.temporal_kernel;
    auto& p = d.params_;
    p.add("in.w", nn::fan_in_uniform({w, c2, 3, 3}, c2 * 9, rng));
    p.add("in.b", nn::fan_in_uniform({w}, c2 * 9, rng));
    p.add("t_embed", Tensor<float>(Shape{1, w, 1, 1}));
    const double conv_std = std::sqrt(1.0 / static_cast<double>(w * kt * 9));
    for (std::size_t b = 0; b < config.blocks; ++b) {
        p.add(block_name(b, "norm1.g"), Tensor<float>::full(Shape{w}, 1.0f));
        p.add(block_name(b, "norm1.b"), Tensor<float>(Shape{w}));
        p.add(block_name(b, "conv1.w"), nn::normal({w, w, kt, 3, 3}, conv_std, rng));
        p.add(block_name(b, "conv1.b"), Tensor<float>(Shape{w}));
        p.add(block_name(b, "norm2.g"), Tensor<float>::full(Shape{w}, 1.0f));
        p.add(block_name(b, "norm2.b"), Tensor<float>(Shape{w}));
        p.add(block_name(b, "conv2.w"), nn::normal({w, w, kt, 3, 3}, conv_std, rng));
        p.add(block_name(b, "conv2.b"), Tensor<float>(Shape{w}));
    }
    p.add("out.w", Tensor<float>(Shape{config.latent_channels, w, 3, 3}));
    p.add("out.b", Tensor<float>(Shape{config.latent_channels}));
    return d;
}

Tensor<float> Denoiser::predict(const Tensor<float>& z_in, int t) const {
    if (t != kTimestep) throw InvalidArgument("only timestep 399 is supported, got " + std::to_string(t));
    const std::size_t c = config_.latent_channels;
    if (z_in.rank() != 4 || z_in.dim(1) != 2 * c) {
        throw ShapeError("denoiser expects [L, " + std::to_string(2 * c) + ", h, w], got " + tensor::to_string(z_in.shape()));
    }
    const auto& p = params_;
    auto h = ops::add(ops::conv2d(z_in, p.get("in.w"), p.get("in.b"), 1, 1), p.get("t_embed"));
    for (std::size_t b = 0; b < config_.blocks; ++b) {
        auto r = ops::group_norm(h, p.get(block_name(b, "norm1.g")), p.get(block_name(b, "norm1.b")), config_.groups);
        r = ops::conv3d_causal(ops::silu(r), p.get(block_name(b, "conv1.w")), p.get(block_name(b, "conv1.b")));
        r = ops::group_norm(r, p.get(block_name(b, "norm2.g")), p.get(block_name(b, "norm2.b")), config_.groups);
        r = ops::conv3d_causal(ops::silu(r), p.get(block_name(b, "conv2.w")), p.get(block_name(b, "conv2.b")));
        h = ops::add(h, r);
    }
    const auto delta = ops::conv2d(ops::silu(h), p.get("out.w"), p.get("out.b"), 1, 1);
    return ops::add(ops::slice(z_in, 1, 0, c), delta);
}

void Denoiser::save(tensor::Checkpoint& ckpt) const {
    auto& m = ckpt.metadata();
    m["denoiser.latent_channels"] = std::to_string(config_.latent_channels);
    m["denoiser.width"] = std::to_string(config_.width);
    m["denoiser.blocks"] = std::to_string(config_.blocks);
    m["denoiser.temporal_kernel"] = std::to_string(config_.temporal_kernel);
    m["denoiser.groups"] = std::to_string(config_.groups);
    params_.save(ckpt, "denoiser.");
}

Denoiser Denoiser::load(const tensor::Checkpoint& ckpt) {
    auto field = [&](const char* key) {
        const auto v = ckpt.meta(std::string("denoiser.") + key);
        if (!v) throw NotFound(std::string("checkpoint lacks denoiser.") + key);
        return static_cast<std::size_t>(std::stoul(*v));
    };
    DenoiserConfig cfg;
    cfg.latent_channels = field("latent_channels");
    cfg.width = field("width");
    cfg.blocks = field("blocks");
    cfg.temporal_kernel = field("temporal_kernel");
    cfg.groups = field("groups");
    auto d = create(cfg, 0);
    d.params_.load(ckpt, "denoiser.");
    return d;
}

void GuidanceConfig::validate() const {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("guidance scale must be a finite value >= 0");
}

Tensor<float> rfg_combine(const Tensor<float>& cond, const Tensor<float>& uncond, double s) {
    GuidanceConfig{s}.validate();
    if (cond.shape() != uncond.shape()) {
        throw ShapeError("conditional " + tensor::to_string(cond.shape()) + " and unconditional " +
                         tensor::to_string(uncond.shape()) + " predictions differ in shape");
    }
    if (s == 1.0) return cond.clone();
    if (s == 0.0) return uncond.clone();
    Tensor<float> out(cond.shape());
    const auto c = cond.data();
    const auto u = uncond.data();
    auto o = out.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double ui = u[i];
        o[i] = static_cast<float>(ui + s * (static_cast<double>(c[i]) - ui));
    }
    return out;
}

Tensor<float> guided_latent(const Tensor<float>& z_lr, const Tensor<float>& z_ref, const GuidanceConfig& guidance,
                            const Denoiser& model, std::size_t* predict_calls) {
    guidance.validate();
    tensor::NoGradScope<float> no_grad;
    std::size_t calls = 0;
    bool blind = true;
    for (float v : z_ref.data()) {
        if (v != 0.0f) {
            blind = false;
            break;
        }
    }
    auto run = [&](const Tensor<float>& ref) {
        ++calls;
        return model.predict(conditioning::assemble_condition(z_lr, ref));
    };
    Tensor<float> out;
    if (guidance.scale == 1.0 && !blind) {
        out = run(z_ref);
    } else {
        const Tensor<float> zeros(z_ref.shape());
        const auto uncond = run(zeros);
        out = (blind || guidance.scale == 0.0) ? uncond : rfg_combine(run(z_ref), uncond, guidance.scale);
    }
    if (predict_calls) *predict_calls = calls;
    return out;
}

Restoration restore(const Tensor<float>& z_lr, const Tensor<float>& z_ref, const GuidanceConfig& guidance,
                    const Denoiser& model, const vae::Codec& codec) {
    Restoration r;
    r.latent = guided_latent(z_lr, z_ref, guidance, model, &r.predict_calls);
    r.video = codec.decode_video(r.latent);
    return r;
}

}  // namespace sparkprop::denoiser
