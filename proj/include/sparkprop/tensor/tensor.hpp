#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sparkprop/error.hpp"

namespace sparkprop::tensor {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets the autograd graph refer back to the tensors it produced. Use clone()
/// for an independent copy.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }
    /// Normal(0, stddev) entries drawn from `rng`.
    static Tensor randn(Shape shape, std::mt19937_64& rng, T stddev = T(1));

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const { return impl().shape; }
    std::size_t rank() const { return impl().shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl().values.size(); }

    std::span<T> data() & { return impl().values; }
    std::span<const T> data() const& { return impl().values; }
    // A temporary handle may hold the last reference to the storage.
    std::span<T> data() && = delete;
    std::vector<T> to_vector() const { return impl().values; }
    T* raw() { return impl().values.data(); }
    const T* raw() const { return impl().values.data(); }
    T item() const;

    bool requires_grad() const { return impl().requires_grad; }
    void set_requires_grad(bool on) { impl().requires_grad = on; }

    bool has_grad() const { return !impl().grad.empty(); }
    /// Gradient buffer, allocated as zeros on first access. Like the values it
    /// belongs to the shared storage, so a const handle can still write it.
    std::span<T> grad() const;
    void zero_grad() const;

    /// Deep copy of values; the result is a fresh leaf without gradient.
    Tensor clone() const;
    /// Shares nothing with *this; identical to clone() but reads as intent.
    Tensor detach() const { return clone(); }

    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<T> values;
        std::vector<T> grad;
        bool requires_grad = false;
    };

    Impl& impl();
    const Impl& impl() const;

    std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

/// Converts between precisions; used by the float64 gradient oracles.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
    std::vector<To> values(src.numel());
    auto in = src.data();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<To>(in[i]);
    return Tensor<To>(src.shape(), std::move(values), src.requires_grad());
}

}  // namespace sparkprop::tensor
