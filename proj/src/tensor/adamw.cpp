#include "sparkprop/tensor/adamw.hpp"

#include <cmath>
#include <utility>

namespace sparkprop::tensor {

AdamWState make_adamw_state(std::span<const Tensor<float>> params, const AdamWConfig& config) {
    AdamWState state;
    state.config = config;
    for (const auto& p : params) {
        state.first_moment.emplace_back(p.numel(), 0.0f);
        state.second_moment.emplace_back(p.numel(), 0.0f);
    }
    return state;
}

StepOutcome adamw_step(std::span<Tensor<float>> params, AdamWState& state) {
    if (params.size() != state.first_moment.size()) {
        throw ShapeError("adamw_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].numel() != state.first_moment[i].size()) {
            throw ShapeError("adamw_step: accumulator size mismatch for parameter " + std::to_string(i) +
                             " with shape " + to_string(params[i].shape()));
        }
        if (!params[i].has_grad()) continue;
        for (float g : std::as_const(params[i]).grad()) {
            if (!std::isfinite(g)) return StepOutcome{false, true};
        }
    }

    const auto& cfg = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(cfg.beta1, t);
    const double bias2 = 1.0 - std::pow(cfg.beta2, t);
    const float b1 = static_cast<float>(cfg.beta1);
    const float b2 = static_cast<float>(cfg.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto values = p.data();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const bool has_grad = p.has_grad();
        std::span<const float> grad = std::as_const(p).grad();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const float g = has_grad ? grad[j] : 0.0f;
            m[j] = b1 * m[j] + (1.0f - b1) * g;
            v[j] = b2 * v[j] + (1.0f - b2) * g * g;
            const double m_hat = m[j] / bias1;
            const double v_hat = v[j] / bias2;
            const double update = m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * values[j];
            values[j] = static_cast<float>(values[j] - cfg.lr * update);
        }
    }
    return StepOutcome{};
}

}  // namespace sparkprop::tensor
