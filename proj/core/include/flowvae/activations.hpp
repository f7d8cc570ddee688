#pragma once

#include <string>

#include "flowvae/tensor.hpp"

namespace flowvae {

enum class Activation { linear, relu, sigmoid, softmax };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Applies the activation over the last axis (softmax normalizes each row
/// with max-subtraction; rows come out strictly positive and sum to 1).
Tensor activation_forward(const Tensor& x, Activation kind);

/// Gradient wrt the pre-activation given the activation OUTPUT y and the
/// incoming gradient g. Using the output is enough for all four kinds
/// (relu masks on y > 0, sigmoid uses y(1-y), softmax the full Jacobian).
Tensor activation_backward(const Tensor& y, const Tensor& g, Activation kind);

}  // namespace flowvae
