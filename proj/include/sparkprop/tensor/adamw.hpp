#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sparkprop/tensor/tensor.hpp"

namespace sparkprop::tensor {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Moment accumulators for a fixed, ordered list of parameters.
struct AdamWState {
    AdamWConfig config;
    std::uint64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

struct StepOutcome {
    bool applied = true;
    /// Set when some gradient was NaN/Inf; the parameters and state are untouched.
    bool non_finite_gradient = false;
};

AdamWState make_adamw_state(std::span<const Tensor<float>> params, const AdamWConfig& config);

/// One decoupled-weight-decay Adam update using each parameter's grad():
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2,
///   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps) + lr * wd * p.
/// Parameters without an allocated gradient are treated as having zero gradient.
StepOutcome adamw_step(std::span<Tensor<float>> params, AdamWState& state);

}  // namespace sparkprop::tensor
