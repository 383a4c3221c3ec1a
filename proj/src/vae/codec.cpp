#include "sparkprop/vae/codec.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "sparkprop/tensor/ops.hpp"
#include "sparkprop/vae/layout.hpp"

namespace sparkprop::vae {

namespace ops = tensor::ops;
using tensor::Shape;

std::size_t latent_index_of(std::size_t frame, std::size_t temporal_factor) {
    return frame == 0 ? 0 : 1 + (frame - 1) / temporal_factor;
}

std::size_t latent_length(std::size_t frames) {
    if (frames == 0 || (frames - 1) % kTemporalFactor != 0) {
        throw InvalidArgument("clip length must satisfy (T-1) % 4 == 0, got T=" + std::to_string(frames));
    }
    return 1 + (frames - 1) / kTemporalFactor;
}

std::size_t frame_length(std::size_t latents) {
    if (latents == 0) throw InvalidArgument("latent length must be positive");
    return 1 + (latents - 1) * kTemporalFactor;
}

Codec Codec::analytic(std::size_t spatial_factor) {
    if (spatial_factor != 2 && spatial_factor != 4 && spatial_factor != 8) {
        throw InvalidArgument("spatial factor must be 2, 4 or 8");
    }
    Codec c;
    c.mode_ = CodecMode::analytic;
    c.spatial_factor_ = spatial_factor;
    return c;
}

Codec Codec::learned(std::size_t spatial_factor, std::size_t latent_channels, std::uint64_t seed, std::size_t hidden) {
    Codec c = analytic(spatial_factor);
    c.mode_ = CodecMode::learned;
    c.latent_channels_ = latent_channels;
    c.hidden_ = hidden;
    const std::size_t g = c.folded_channels(), C = latent_channels, H = hidden;
    if (C == 0 || C > g) throw InvalidArgument("latent channels must be in [1, " + std::to_string(g) + "]");
    std::mt19937_64 rng(seed);

    // Linear path: encoder and decoder start as a tied orthonormal projection,
    // i.e. a PCA-like code before any training.
    Eigen::MatrixXd gauss(g, C);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index i = 0; i < gauss.rows(); ++i)
        for (Eigen::Index j = 0; j < gauss.cols(); ++j) gauss(i, j) = n01(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ() * Eigen::MatrixXd::Identity(g, C);
    Tensor<float> el(Shape{C, g, 1, 1}), dl(Shape{g, C, 1, 1});
    for (std::size_t i = 0; i < g; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            const auto v = static_cast<float>(q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            el.data()[j * g + i] = v;
            dl.data()[i * C + j] = v;
        }

    auto& p = c.params_;
    p.add("enc.linear.w", el);
    p.add("enc.linear.b", Tensor<float>(Shape{C}));
    p.add("enc.conv1.w", nn::fan_in_uniform({H, g, 3, 3}, g * 9, rng));
    p.add("enc.conv1.b", nn::fan_in_uniform({H}, g * 9, rng));
    p.add("enc.conv2.w", Tensor<float>(Shape{C, H, 3, 3}));
    p.add("enc.conv2.b", Tensor<float>(Shape{C}));
    p.add("dec.linear.w", dl);
    p.add("dec.linear.b", Tensor<float>::full(Shape{g}, 0.5f));
    p.add("dec.conv1.w", nn::fan_in_uniform({H, C, 3, 3}, C * 9, rng));
    p.add("dec.conv1.b", nn::fan_in_uniform({H}, C * 9, rng));
    p.add("dec.conv2.w", nn::fan_in_uniform({H, H, 3, 3}, H * 9, rng));
    p.add("dec.conv2.b", nn::fan_in_uniform({H}, H * 9, rng));
    p.add("dec.conv3.w", Tensor<float>(Shape{g, H, 3, 3}));
    p.add("dec.conv3.b", Tensor<float>(Shape{g}));
    return c;
}

std::size_t Codec::latent_channels() const {
    return mode_ == CodecMode::analytic ? folded_channels() : latent_channels_;
}

void Codec::check_video(const Tensor<float>& video) const {
    if (video.rank() != 4 || video.dim(1) != 3) {
        throw ShapeError("codec input must be [T, 3, H, W], got " + tensor::to_string(video.shape()));
    }
    latent_length(video.dim(0));
    if (video.dim(2) % spatial_factor_ != 0 || video.dim(3) % spatial_factor_ != 0) {
        throw InvalidArgument("frame size " + std::to_string(video.dim(2)) + "x" + std::to_string(video.dim(3)) +
                              " must be divisible by " + std::to_string(spatial_factor_));
    }
}

Tensor<float> Codec::fold(const Tensor<float>& video) const {
    const std::size_t t = video.dim(0), h = video.dim(2), w = video.dim(3), f = spatial_factor_;
    const std::size_t l = latent_length(t);
    const Tensor<float> first = ops::slice(video, 0, 0, 1);
    const Tensor<float> parts[] = {first, first, first, video};
    auto x = ops::concat(std::span<const Tensor<float>>(parts), 0);  // 4L frames
    x = ops::reshape(x, Shape{4 * l, 3, h / f, f, w / f, f});
    const std::size_t order[] = {0, 1, 3, 5, 2, 4};
    x = ops::permute(x, order);
    return ops::reshape(x, Shape{l, folded_channels(), h / f, w / f});
}

Tensor<float> Codec::unfold(const Tensor<float>& folded) const {
    const std::size_t l = folded.dim(0), h = folded.dim(2), w = folded.dim(3), f = spatial_factor_;
    auto x = ops::reshape(folded, Shape{4 * l, 3, f, f, h, w});
    x = ops::slice(x, 0, 3, 4 * l);  // drop the replicated copies of frame 0
    const std::size_t order[] = {0, 1, 4, 2, 5, 3};
    x = ops::permute(x, order);
    return ops::reshape(x, Shape{frame_length(l), 3, h * f, w * f});
}

Tensor<float> Codec::encode(const Tensor<float>& video) const {
    check_video(video);
    auto g = fold(video);
    if (mode_ == CodecMode::analytic) return g;
    const auto& p = params_;
    auto lin = ops::conv2d(g, p.get("enc.linear.w"), p.get("enc.linear.b"));
    auto hid = ops::silu(ops::conv2d(g, p.get("enc.conv1.w"), p.get("enc.conv1.b"), 1, 1));
    return ops::add(lin, ops::conv2d(hid, p.get("enc.conv2.w"), p.get("enc.conv2.b"), 1, 1));
}

Tensor<float> Codec::decode(const Tensor<float>& latent) const {
    if (latent.rank() != 4 || latent.dim(1) != latent_channels()) {
        throw ShapeError("codec expects [L, " + std::to_string(latent_channels()) + ", h, w] latents, got " +
                         tensor::to_string(latent.shape()));
    }
    if (mode_ == CodecMode::analytic) return unfold(latent);
    const auto& p = params_;
    auto lin = ops::conv2d(latent, p.get("dec.linear.w"), p.get("dec.linear.b"));
    auto h = ops::silu(ops::conv2d(latent, p.get("dec.conv1.w"), p.get("dec.conv1.b"), 1, 1));
    h = ops::silu(ops::conv2d(h, p.get("dec.conv2.w"), p.get("dec.conv2.b"), 1, 1));
    return unfold(ops::add(lin, ops::conv2d(h, p.get("dec.conv3.w"), p.get("dec.conv3.b"), 1, 1)));
}

Tensor<float> Codec::encode_single_frame(const Tensor<float>& image) const {
    if (image.rank() == 3) return encode(ops::reshape(image, Shape{1, image.dim(0), image.dim(1), image.dim(2)}));
    if (image.rank() != 4 || image.dim(0) != 1) {
        throw ShapeError("single-frame input must be [3, H, W] or [1, 3, H, W], got " + tensor::to_string(image.shape()));
    }
    return encode(image);
}

Tensor<float> Codec::encode_video(const video::Video& v) const {
    tensor::NoGradScope<float> no_grad;
    return encode(to_tensor(v));
}

video::Video Codec::decode_video(const Tensor<float>& latent) const {
    tensor::NoGradScope<float> no_grad;
    return to_video(decode(latent));
}

void Codec::save(tensor::Checkpoint& ckpt) const {
    ckpt.metadata()["codec.mode"] = mode_ == CodecMode::analytic ? "analytic" : "learned";
    ckpt.metadata()["codec.spatial_factor"] = std::to_string(spatial_factor_);
    ckpt.metadata()["codec.latent_channels"] = std::to_string(latent_channels_);
    ckpt.metadata()["codec.hidden"] = std::to_string(hidden_);
    params_.save(ckpt, "codec.");
}

Codec Codec::load(const tensor::Checkpoint& ckpt) {
    const auto mode = ckpt.meta("codec.mode");
    const auto f = ckpt.meta("codec.spatial_factor");
    if (!mode || !f) throw NotFound("checkpoint holds no codec");
    if (*mode == "analytic") return analytic(std::stoul(*f));
    if (*mode != "learned") throw InvalidArgument("unknown codec mode '" + *mode + "'");
    Codec c = learned(std::stoul(*f), std::stoul(ckpt.meta("codec.latent_channels").value_or("16")), 0,
                      std::stoul(ckpt.meta("codec.hidden").value_or("64")));
    c.params_.load(ckpt, "codec.");
    return c;
}

PretrainResult pretrain_codec(const std::vector<video::Video>& clips, const PretrainConfig& cfg,
                              const std::function<void(std::size_t, double)>& on_iteration) {
    if (cfg.mode == CodecMode::analytic) return PretrainResult{Codec::analytic(cfg.spatial_factor), {}, false};
    if (clips.empty()) throw InvalidArgument("pretraining needs at least one clip");
    if (cfg.batch == 0) throw InvalidArgument("batch must be positive");
    PretrainResult result{Codec::learned(cfg.spatial_factor, cfg.latent_channels, cfg.seed, cfg.hidden), {}, false};
    Codec& codec = result.codec;

    std::vector<Tensor<float>> data;
    for (const auto& c : clips) data.push_back(to_tensor(c));
    auto& params = codec.params().tensors();
    auto state = tensor::make_adamw_state(params, tensor::AdamWConfig{cfg.lr, 0.9, 0.95, 1e-8, 0.0});
    nn::ParamSet last_good = codec.params().clone();

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        codec.params().zero_grad();
        tensor::Graph<float> graph;
        double loss_value = 0.0;
        {
            tensor::GraphScope<float> scope(graph);
            Tensor<float> total;
            for (std::size_t b = 0; b < cfg.batch; ++b) {
                const auto& x = data[(it * cfg.batch + b) % data.size()];
                auto l = ops::mean(ops::sq_diff(codec.decode(codec.encode(x)), x));
                total = total.defined() ? ops::add(total, l) : l;
            }
            total = ops::scale(total, 1.0f / static_cast<float>(cfg.batch));
            loss_value = total.item();
            if (!std::isfinite(loss_value)) {
                result.diverged = true;
                codec.params().assign(last_good);
                break;
            }
            tensor::backward(graph, total);
        }
        const auto outcome = tensor::adamw_step(params, state);
        result.losses.push_back(loss_value);
        if (on_iteration) on_iteration(it, loss_value);
        if (outcome.non_finite_gradient) continue;
        // Snapshot cheaply every 100 iterations; divergence rolls back at most that far.
        if (it % 100 == 99) last_good = codec.params().clone();
    }
    return result;
}

}  // namespace sparkprop::vae
