#include "sparkprop/tensor/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

namespace sparkprop::tensor {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    }
    impl_->values.assign(sparkprop::tensor::numel(shape), T(0));
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
    if (sparkprop::tensor::numel(shape) != values.size()) {
        throw ShapeError("shape " + to_string(shape) + " needs " +
                         std::to_string(sparkprop::tensor::numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    Tensor out(std::move(shape));
    std::fill(out.impl_->values.begin(), out.impl_->values.end(), value);
    return out;
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape shape, std::mt19937_64& rng, T stddev) {
    Tensor out(std::move(shape));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : out.impl_->values) v = static_cast<T>(dist(rng)) * stddev;
    return out;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
    }
    return impl().shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + to_string(shape()));
    return impl().values[0];
}

template <typename T>
std::span<T> Tensor<T>::grad() const {
    if (!impl_) throw Error("grad() on an undefined tensor");
    auto& im = *impl_;
    if (im.grad.empty()) im.grad.assign(im.values.size(), T(0));
    return im.grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
    if (!impl_) return;
    auto& g = impl_->grad;
    std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(impl().shape, impl().values, false);
}

template <typename T>
typename Tensor<T>::Impl& Tensor<T>::impl() {
    if (!impl_) throw Error("use of an undefined tensor");
    return *impl_;
}

template <typename T>
const typename Tensor<T>::Impl& Tensor<T>::impl() const {
    if (!impl_) throw Error("use of an undefined tensor");
    return *impl_;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace sparkprop::tensor
