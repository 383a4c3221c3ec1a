#include "sparkprop/tensor/graph.hpp"

#include <array>
#include <utility>

namespace sparkprop::tensor {

namespace {

constexpr std::array<std::pair<OpTag, std::string_view>, 22> kOpNames{{
    {OpTag::add, "add"},
    {OpTag::sub, "sub"},
    {OpTag::mul, "mul"},
    {OpTag::div, "div"},
    {OpTag::scale, "scale"},
    {OpTag::add_scalar, "add_scalar"},
    {OpTag::matmul, "matmul"},
    {OpTag::conv2d, "conv2d"},
    {OpTag::conv3d_causal, "conv3d_causal"},
    {OpTag::silu, "silu"},
    {OpTag::leaky_relu, "leaky_relu"},
    {OpTag::group_norm, "group_norm"},
    {OpTag::mean, "mean"},
    {OpTag::sum, "sum"},
    {OpTag::sq_diff, "sq_diff"},
    {OpTag::concat, "concat"},
    {OpTag::slice, "slice"},
    {OpTag::pad, "pad"},
    {OpTag::upsample_nearest, "upsample_nearest"},
    {OpTag::downsample_stride, "downsample_stride"},
    {OpTag::reshape, "reshape"},
    {OpTag::permute, "permute"},
}};

}  // namespace

std::string_view op_name(OpTag tag) {
    for (const auto& [t, name] : kOpNames) {
        if (t == tag) return name;
    }
    return "unknown";
}

std::optional<OpTag> parse_op_tag(std::string_view name) {
    for (const auto& [t, n] : kOpNames) {
        if (n == name) return t;
    }
    if (name == "concat_channels") return OpTag::concat;
    return std::nullopt;
}

template <typename T>
void Graph<T>::record(OpTag tag, std::vector<Tensor<T>> inputs, Tensor<T> output,
                      std::function<void()> backward) {
    nodes_.push_back(Node{tag, std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void backward(Graph<T>& graph, Tensor<T> loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw Error("loss does not depend on any tensor that requires a gradient");
    }
    loss.grad()[0] = T(1);
    const auto& nodes = graph.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if (it->output.has_grad()) it->backward();
    }
}

template class Graph<float>;
template class Graph<double>;
template void backward<float>(Graph<float>&, Tensor<float>);
template void backward<double>(Graph<double>&, Tensor<double>);

}  // namespace sparkprop::tensor
