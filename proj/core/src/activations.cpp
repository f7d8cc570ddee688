#include "flowvae/activations.hpp"

#include <cmath>

#include "flowvae/errors.hpp"

namespace flowvae {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

Activation activation_from_name(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softmax") return Activation::softmax;
    throw ArgumentError("unknown activation: " + name);
}

Tensor activation_forward(const Tensor& x, Activation kind) {
    Tensor y = x;
    switch (kind) {
        case Activation::linear:
            break;
        case Activation::relu:
            for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::sigmoid:
            for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Activation::softmax: {
            const std::size_t cols = y.shape().back();
            const std::size_t rows = y.size() / cols;
            for (std::size_t r = 0; r < rows; ++r) {
                double* row = y.data() + r * cols;
                double mx = row[0];
                for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
                double sum = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    row[c] = std::exp(row[c] - mx);
                    sum += row[c];
                }
                for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
            }
            break;
        }
    }
    return y;
}

Tensor activation_backward(const Tensor& y, const Tensor& g, Activation kind) {
    if (!y.same_shape(g)) throw DimensionError("activation_backward: shape mismatch");
    Tensor dx = g;
    switch (kind) {
        case Activation::linear:
            break;
        case Activation::relu:
            for (std::size_t i = 0; i < dx.size(); ++i) {
                if (y[i] <= 0.0) dx[i] = 0.0;
            }
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < dx.size(); ++i) {
                dx[i] = g[i] * y[i] * (1.0 - y[i]);
            }
            break;
        case Activation::softmax: {
            // dx_i = s_i * (g_i - sum_j g_j s_j), rowwise.
            const std::size_t cols = y.shape().back();
            const std::size_t rows = y.size() / cols;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* s = y.data() + r * cols;
                const double* gr = g.data() + r * cols;
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * s[c];
                double* out = dx.data() + r * cols;
                for (std::size_t c = 0; c < cols; ++c) out[c] = s[c] * (gr[c] - dot);
            }
            break;
        }
    }
    return dx;
}

}  // namespace flowvae
