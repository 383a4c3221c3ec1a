#pragma once

#include <cstdint>
#include <vector>

#include "sparkprop/tensor/tensor.hpp"

namespace sparkprop::train {

using tensor::Tensor;

/// Fixed random filters for the perceptual surrogate: per scale, `filters`
/// zero-mean, unit-norm 5x5 RGB kernels. Built once from a seed and never
/// trained, so the loss means the same thing in training and evaluation.
class FilterBank {
public:
    static constexpr std::size_t kScales = 3;

    explicit FilterBank(std::uint64_t seed = 5, std::size_t filters = 8);

    /// [filters, 3, 5, 5] kernels of scale `s`.
    template <typename T>
    Tensor<T> kernels(std::size_t s) const;
    std::size_t filters() const { return filters_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::size_t filters_;
    std::vector<std::vector<double>> weights_;
};

/// Mean over t in [1, T) of ((pred_t - pred_{t-1}) - (gt_t - gt_{t-1}))^2 for
/// [T, C, H, W] clips.
template <typename T>
Tensor<T> frame_consistency_loss(const Tensor<T>& pred, const Tensor<T>& gt);

/// 1 - similarity, where similarity averages, over three scales (2x average
/// pooling between them) and over the image channels plus the filter
/// responses, the mean of a luminance-style term (2 mu_p mu_g + c) /
/// (mu_p^2 + mu_g^2 + c) and a correlation term (2 cov + c) / (var_p + var_g + c).
/// Inputs are [N, 3, H, W] with H and W divisible by 4. The result lies in [0, 2].
template <typename T>
Tensor<T> dists_surrogate(const Tensor<T>& pred, const Tensor<T>& gt, const FilterBank& bank);

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& gt);

/// mse + lambda1 * dists + lambda2 * frame.
template <typename T>
Tensor<T> stage2_video_loss(const Tensor<T>& pred, const Tensor<T>& gt, double lambda1, double lambda2,
                            const FilterBank& bank);

/// The same loss with its components kept for logging.
struct LossParts {
    Tensor<float> total;
    double mse = 0.0;
    double dists = 0.0;
    double frame = 0.0;
};

LossParts stage2_video_loss_parts(const Tensor<float>& pred, const Tensor<float>& gt, double lambda1, double lambda2,
                                  const FilterBank& bank);
/// Image-branch loss: mse + lambda1 * dists.
LossParts image_loss_parts(const Tensor<float>& pred, const Tensor<float>& gt, double lambda1, const FilterBank& bank);

}  // namespace sparkprop::train
