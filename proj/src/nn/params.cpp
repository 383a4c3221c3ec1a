#include "sparkprop/nn/params.hpp"

#include <algorithm>
#include <cmath>

namespace sparkprop::nn {

Tensor<float> ParamSet::add(std::string name, Tensor<float> value) {
    for (const auto& n : names_) {
        if (n == name) throw InvalidArgument("duplicate parameter '" + name + "'");
    }
    value.set_requires_grad(true);
    names_.push_back(std::move(name));
    tensors_.push_back(value);
    return value;
}

const Tensor<float>& ParamSet::get(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return tensors_[i];
    }
    throw NotFound("no parameter '" + name + "'");
}

std::size_t ParamSet::count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParamSet::set_requires_grad(bool on) const {
    for (auto t : tensors_) t.set_requires_grad(on);
}

void ParamSet::zero_grad() const {
    for (const auto& t : tensors_) t.zero_grad();
}

void ParamSet::save(tensor::Checkpoint& ckpt, const std::string& prefix) const {
    for (std::size_t i = 0; i < names_.size(); ++i) ckpt.put(prefix + names_[i], tensors_[i]);
}

void ParamSet::load(const tensor::Checkpoint& ckpt, const std::string& prefix) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        const auto stored = ckpt.get_f32(prefix + names_[i]);
        if (stored.shape() != tensors_[i].shape()) {
            throw ShapeError("checkpoint tensor " + prefix + names_[i] + " has shape " + tensor::to_string(stored.shape()) +
                             ", expected " + tensor::to_string(tensors_[i].shape()));
        }
        std::copy(stored.data().begin(), stored.data().end(), tensors_[i].data().begin());
    }
}

void ParamSet::assign(const ParamSet& other) {
    if (other.names_ != names_) throw InvalidArgument("parameter sets differ");
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (other.tensors_[i].shape() != tensors_[i].shape()) throw ShapeError("parameter " + names_[i] + " changed shape");
        std::copy(other.tensors_[i].data().begin(), other.tensors_[i].data().end(), tensors_[i].data().begin());
    }
}

ParamSet ParamSet::clone() const {
    ParamSet out;
    for (std::size_t i = 0; i < names_.size(); ++i) {
        auto t = tensors_[i].clone();
        t.set_requires_grad(tensors_[i].requires_grad());
        out.names_.push_back(names_[i]);
        out.tensors_.push_back(t);
    }
    return out;
}

Tensor<float> fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(u(rng));
    return t;
}

Tensor<float> normal(Shape shape, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, stddev);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<float>(g(rng));
    return t;
}

}  // namespace sparkprop::nn
