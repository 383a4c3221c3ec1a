#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sparkprop/tensor/checkpoint.hpp"
#include "sparkprop/tensor/tensor.hpp"

namespace sparkprop::nn {

using tensor::Shape;
using tensor::Tensor;

/// Named trainable tensors in a fixed order (the order optimizer state and
/// checkpoints follow).
class ParamSet {
public:
    Tensor<float> add(std::string name, Tensor<float> value);
    const Tensor<float>& get(const std::string& name) const;

    std::vector<Tensor<float>>& tensors() { return tensors_; }
    const std::vector<Tensor<float>>& tensors() const { return tensors_; }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t count() const;

    void set_requires_grad(bool on) const;
    void zero_grad() const;

    void save(tensor::Checkpoint& ckpt, const std::string& prefix) const;
    /// Overwrites values in place; every name must be present with a matching shape.
    void load(const tensor::Checkpoint& ckpt, const std::string& prefix);
    /// Copies values from a set with the same names and shapes.
    void assign(const ParamSet& other);
    /// Deep copy.
    ParamSet clone() const;

private:
    std::vector<std::string> names_;
    std::vector<Tensor<float>> tensors_;
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the customary default for conv layers.
Tensor<float> fan_in_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);
Tensor<float> normal(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace sparkprop::nn
