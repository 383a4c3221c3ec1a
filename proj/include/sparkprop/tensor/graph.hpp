#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "sparkprop/tensor/tensor.hpp"

namespace sparkprop::tensor {

enum class OpTag {
    add,
    sub,
    mul,
    div,
    scale,
    add_scalar,
    matmul,
    conv2d,
    conv3d_causal,
    silu,
    leaky_relu,
    group_norm,
    mean,
    sum,
    sq_diff,
    concat,
    slice,
    pad,
    upsample_nearest,
    downsample_stride,
    reshape,
    permute,
};

std::string_view op_name(OpTag tag);
std::optional<OpTag> parse_op_tag(std::string_view name);

/// Tape of primitive applications in execution order. Because nodes are
/// appended as they run, every node's inputs were produced by earlier nodes
/// (or are leaves), so reverse iteration is a valid reverse topological order.
template <typename T>
class Graph {
public:
    struct Node {
        OpTag tag;
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        std::function<void()> backward;
    };

    void record(OpTag tag, std::vector<Tensor<T>> inputs, Tensor<T> output,
                std::function<void()> backward);

    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    void clear() noexcept { nodes_.clear(); }

private:
    std::vector<Node> nodes_;
};

/// The graph ops on this thread record into, or nullptr when recording is off.
template <typename T>
Graph<T>*& active_graph() {
    thread_local Graph<T>* graph = nullptr;
    return graph;
}

/// Makes `graph` the active recording target for the lifetime of the scope.
template <typename T>
class GraphScope {
public:
    explicit GraphScope(Graph<T>& graph) : previous_(active_graph<T>()) { active_graph<T>() = &graph; }
    ~GraphScope() { active_graph<T>() = previous_; }
    GraphScope(const GraphScope&) = delete;
    GraphScope& operator=(const GraphScope&) = delete;

private:
    Graph<T>* previous_;
};

/// Suspends recording, e.g. for inference with frozen parameters.
template <typename T>
class NoGradScope {
public:
    NoGradScope() : previous_(active_graph<T>()) { active_graph<T>() = nullptr; }
    ~NoGradScope() { active_graph<T>() = previous_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Graph<T>* previous_;
};

/// Accumulates d(loss)/d(x) into x.grad() for every tensor x in the loss's
/// recorded ancestry that requires a gradient. Leaf gradients accumulate
/// across calls; zero them between optimizer steps.
template <typename T>
void backward(Graph<T>& graph, Tensor<T> loss);

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace sparkprop::tensor
