#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "sparkprop/tensor/graph.hpp"
#include "sparkprop/tensor/tensor.hpp"

namespace sparkprop::tensor {

struct GradCheckReport {
    /// max_i |analytic_i - fd_i| / max(|analytic_i|, |fd_i|, floor).
    double elementwise = 0.0;
    /// max_i |analytic_i - fd_i| / max_i |fd_i|, over all inputs together. Small
    /// components carry float rounding of the order of the largest ones, which
    /// this measure does not inflate.
    double normwise = 0.0;
};

/// Compares the reverse-mode gradient of `fn` at `point` with central finite
/// differences of step `eps`.
///
/// `fn` must be generic over precision: it is called with
/// std::vector<Tensor<T>> to obtain the analytic gradient, and with
/// std::vector<Tensor<double>> to evaluate the finite differences, so a float
/// implementation is always checked against a double-precision oracle.
/// It must return a single-element tensor.
template <typename T, typename Fn>
GradCheckReport grad_check_report(Fn&& fn, const std::vector<Tensor<T>>& point, double eps, double floor = 1e-8) {
    std::vector<Tensor<T>> inputs;
    for (const auto& p : point) {
        Tensor<T> leaf = p.clone();
        leaf.set_requires_grad(true);
        inputs.push_back(leaf);
    }
    Graph<T> graph;
    {
        GraphScope<T> scope(graph);
        Tensor<T> loss = fn(inputs);
        backward(graph, loss);
    }

    std::vector<Tensor<double>> probe;
    for (const auto& p : point) probe.push_back(cast<double>(p));
    auto evaluate = [&]() {
        NoGradScope<double> no_grad;
        return fn(probe).item();
    };

    GradCheckReport report;
    double worst_abs = 0.0, largest = 0.0;
    for (std::size_t k = 0; k < probe.size(); ++k) {
        auto values = probe[k].data();
        std::span<const T> analytic = std::as_const(inputs[k]).grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = evaluate();
            values[i] = saved - eps;
            const double down = evaluate();
            values[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double a = analytic.empty() ? 0.0 : static_cast<double>(analytic[i]);
            const double denom = std::max({std::abs(a), std::abs(fd), floor});
            report.elementwise = std::max(report.elementwise, std::abs(a - fd) / denom);
            worst_abs = std::max(worst_abs, std::abs(a - fd));
            largest = std::max(largest, std::abs(fd));
        }
    }
    report.normwise = worst_abs / std::max(largest, floor);
    return report;
}

/// Elementwise figure of grad_check_report.
template <typename T, typename Fn>
double grad_check(Fn&& fn, const std::vector<Tensor<T>>& point, double eps, double floor = 1e-8) {
    return grad_check_report<T>(std::forward<Fn>(fn), point, eps, floor).elementwise;
}

}  // namespace sparkprop::tensor
