#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sparkprop/tensor/graph.hpp"
#include "sparkprop/tensor/tensor.hpp"

// Differentiable primitives. Each records a node on the active Graph when any
// input requires a gradient; otherwise it is a plain computation.
//
// Layout conventions: image batches and videos are [N, C, H, W] (for videos N
// is time); conv2d weights are [Co, Ci, kh, kw]; conv3d_causal weights are
// [Co, Ci, kt, kh, kw].
namespace sparkprop::tensor::ops {

// Elementwise with numpy-style broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);

/// [m, k] x [k, n] -> [m, n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// `bias` may be undefined. Output spatial size is (H + 2*pad - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t pad = 0);

/// Temporal convolution that only looks backwards: the time axis is padded
/// with kt-1 zero frames on the past side, spatial axes use "same" padding
/// (odd kernels), and output frame l reads input frames
/// [l*stride_t - (kt-1), l*stride_t]. Output length is 1 + (T-1)/stride_t.
template <typename T>
Tensor<T> conv3d_causal(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                        std::size_t stride_t = 1);

template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01));

/// Statistics are taken per leading index and per channel group, so with
/// videos laid out as [T, C, H, W] each frame is normalized on its own.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t groups, T eps = T(1e-5));

template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
/// Reduction over `axes`; reduced axes are kept with extent 1.
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::span<const std::size_t> axes);
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::span<const std::size_t> axes);

/// (a - b)^2 elementwise, shapes must match exactly.
template <typename T> Tensor<T> sq_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Constant padding; `widths[i]` is (before, after) for axis i.
template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::span<const std::pair<std::size_t, std::size_t>> widths,
              T value = T(0));

/// Spatial (last two axes) nearest-neighbour upsampling / strided subsampling.
template <typename T> Tensor<T> upsample_nearest(const Tensor<T>& x, std::size_t factor);
template <typename T> Tensor<T> downsample_stride(const Tensor<T>& x, std::size_t stride);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, std::span<const std::size_t> order);

/// Attributes for the tag-based dispatcher. Only the fields an op reads matter.
struct Attrs {
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t axis = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t groups = 1;
    std::size_t factor = 1;
    double scalar = 0.0;
    Shape shape;
    std::vector<std::size_t> axes;
    std::vector<std::pair<std::size_t, std::size_t>> pads;
};

/// Applies the primitive named `tag` (as spelled by op_name). Unknown names and
/// wrong input counts are rejected.
template <typename T>
Tensor<T> apply(std::string_view tag, std::span<const Tensor<T>> inputs, const Attrs& attrs = {});

}  // namespace sparkprop::tensor::ops
