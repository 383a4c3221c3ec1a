#include "sparkprop/train/losses.hpp"

#include <cmath>
#include <random>

#include "sparkprop/tensor/ops.hpp"

namespace sparkprop::train {

namespace ops = tensor::ops;
using tensor::Shape;

FilterBank::FilterBank(std::uint64_t seed, std::size_t filters) : seed_(seed), filters_(filters) {
    if (filters == 0) throw InvalidArgument("filter bank needs at least one filter");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    constexpr std::size_t per = 3 * 5 * 5;
    for (std::size_t s = 0; s < kScales; ++s) {
        std::vector<double> w(filters * per);
        for (std::size_t f = 0; f < filters; ++f) {
            double mean = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < per; ++i) mean += (w[f * per + i] = g(rng));
            mean /= per;
            for (std::size_t i = 0; i < per; ++i) norm += (w[f * per + i] -= mean) * w[f * per + i];
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < per; ++i) w[f * per + i] /= norm;
        }
        weights_.push_back(std::move(w));
    }
}

template <typename T>
Tensor<T> FilterBank::kernels(std::size_t s) const {
    if (s >= kScales) throw InvalidArgument("filter bank has " + std::to_string(kScales) + " scales");
    std::vector<T> v(weights_[s].begin(), weights_[s].end());
    return Tensor<T>(Shape{filters_, 3, 5, 5}, std::move(v));
}

namespace {

template <typename T>
void require_same(const Tensor<T>& pred, const Tensor<T>& gt, const char* what) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError(std::string(what) + ": prediction " + tensor::to_string(pred.shape()) + " and target " +
                         tensor::to_string(gt.shape()) + " differ");
    }
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t axes[] = {3, 5};
    auto y = ops::mean(ops::reshape(x, Shape{n, c, h / 2, 2, w / 2, 2}), axes);
    return ops::reshape(y, Shape{n, c, h / 2, w / 2});
}

}  // namespace

template <typename T>
Tensor<T> frame_consistency_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    require_same(pred, gt, "frame consistency loss");
    if (pred.rank() != 4 || pred.dim(0) < 2) throw InvalidArgument("frame consistency needs at least two frames");
    const std::size_t t = pred.dim(0);
    auto dp = ops::sub(ops::slice(pred, 0, 1, t), ops::slice(pred, 0, 0, t - 1));
    auto dg = ops::sub(ops::slice(gt, 0, 1, t), ops::slice(gt, 0, 0, t - 1));
    return ops::mean(ops::sq_diff(dp, dg));
}

template <typename T>
Tensor<T> dists_surrogate(const Tensor<T>& pred, const Tensor<T>& gt, const FilterBank& bank) {
    require_same(pred, gt, "perceptual surrogate");
    if (pred.rank() != 4 || pred.dim(1) != 3) throw ShapeError("perceptual surrogate expects [N, 3, H, W]");
    if (pred.dim(2) % 4 != 0 || pred.dim(3) % 4 != 0) throw InvalidArgument("image size must be divisible by 4");
    const T c = T(1e-6);
    const std::size_t spatial[] = {2, 3};
    Tensor<T> p = pred, g = gt, total;
    for (std::size_t s = 0; s < FilterBank::kScales; ++s) {
        if (s > 0) {
            p = avg_pool2(p);
            g = avg_pool2(g);
        }
        const auto k = bank.kernels<T>(s);
        const Tensor<T> none;
        const auto rp = ops::concat_channels(p, ops::conv2d(p, k, none, 1, 2));
        const auto rg = ops::concat_channels(g, ops::conv2d(g, k, none, 1, 2));
        const auto mp = ops::mean(rp, spatial), mg = ops::mean(rg, spatial);
        const auto cp = ops::sub(rp, mp), cg = ops::sub(rg, mg);
        const auto vp = ops::mean(ops::mul(cp, cp), spatial), vg = ops::mean(ops::mul(cg, cg), spatial);
        const auto cov = ops::mean(ops::mul(cp, cg), spatial);
        const auto texture = ops::div(ops::add_scalar(ops::scale(ops::mul(mp, mg), T(2)), c),
                                      ops::add_scalar(ops::add(ops::mul(mp, mp), ops::mul(mg, mg)), c));
        const auto structure = ops::div(ops::add_scalar(ops::scale(cov, T(2)), c), ops::add_scalar(ops::add(vp, vg), c));
        const auto sim = ops::mean(ops::add(texture, structure));  // twice the average similarity
        total = total.defined() ? ops::add(total, sim) : sim;
    }
    return ops::add_scalar(ops::scale(total, T(-1.0 / (2.0 * FilterBank::kScales))), T(1));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    require_same(pred, gt, "mse");
    return ops::mean(ops::sq_diff(pred, gt));
}

template <typename T>
Tensor<T> stage2_video_loss(const Tensor<T>& pred, const Tensor<T>& gt, double lambda1, double lambda2,
                            const FilterBank& bank) {
    auto loss = mse_loss(pred, gt);
    if (lambda1 != 0.0) loss = ops::add(loss, ops::scale(dists_surrogate(pred, gt, bank), static_cast<T>(lambda1)));
    if (lambda2 != 0.0) loss = ops::add(loss, ops::scale(frame_consistency_loss(pred, gt), static_cast<T>(lambda2)));
    return loss;
}

LossParts stage2_video_loss_parts(const Tensor<float>& pred, const Tensor<float>& gt, double lambda1, double lambda2,
                                  const FilterBank& bank) {
    LossParts out;
    auto mse = mse_loss(pred, gt);
    auto d = dists_surrogate(pred, gt, bank);
    auto f = frame_consistency_loss(pred, gt);
    out.mse = mse.item();
    out.dists = d.item();
    out.frame = f.item();
    out.total = ops::add(ops::add(mse, ops::scale(d, static_cast<float>(lambda1))), ops::scale(f, static_cast<float>(lambda2)));
    return out;
}

LossParts image_loss_parts(const Tensor<float>& pred, const Tensor<float>& gt, double lambda1, const FilterBank& bank) {
    LossParts out;
    auto mse = mse_loss(pred, gt);
    auto d = dists_surrogate(pred, gt, bank);
    out.mse = mse.item();
    out.dists = d.item();
    out.total = ops::add(mse, ops::scale(d, static_cast<float>(lambda1)));
    return out;
}

#define SPARKPROP_INSTANTIATE(T)                                                                                  \
    template Tensor<T> FilterBank::kernels<T>(std::size_t) const;                                                 \
    template Tensor<T> frame_consistency_loss<T>(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> dists_surrogate<T>(const Tensor<T>&, const Tensor<T>&, const FilterBank&);                 \
    template Tensor<T> mse_loss<T>(const Tensor<T>&, const Tensor<T>&);                                           \
    template Tensor<T> stage2_video_loss<T>(const Tensor<T>&, const Tensor<T>&, double, double, const FilterBank&);
SPARKPROP_INSTANTIATE(float)
SPARKPROP_INSTANTIATE(double)
#undef SPARKPROP_INSTANTIATE

}  // namespace sparkprop::train
