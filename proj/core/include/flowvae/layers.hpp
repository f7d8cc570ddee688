#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flowvae/activations.hpp"
#include "flowvae/rng.hpp"
#include "flowvae/tensor.hpp"

namespace flowvae {

enum class Mode { train, infer };
enum class Padding { valid, half };

std::string padding_name(Padding p);
Padding padding_from_name(const std::string& name);

/// Output length of a strided 1-D convolution.
///   half  -> ceil(in_len / stride)
///   valid -> floor((in_len - kernel) / stride) + 1, requires in_len >= kernel
std::size_t conv1d_output_len(std::size_t in_len, int kernel, int stride, Padding padding);

/// Effective receptive field of a stack of 1-D conv layers:
/// RF = 1 + sum_i (k_i - 1) * prod_{j<i} s_j.
std::size_t receptive_field(const std::vector<int>& kernels, const std::vector<int>& strides);

/// Fully resolved geometry of one conv layer over a fixed input length.
struct Conv1DGeom {
    std::size_t in_len = 0;
    std::size_t out_len = 0;
    int kernel = 1;
    int stride = 1;
    int pad_left = 0;
    int pad_right = 0;
    Padding padding = Padding::valid;
};

Conv1DGeom make_conv1d_geom(std::size_t in_len, int kernel, int stride, Padding padding);

/// Per-parameter gradient tensors keyed by the parameter's stable name.
class GradStore {
public:
    Tensor& ensure(const std::string& name, const std::vector<std::size_t>& shape);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;
    std::size_t size() const { return grads_.size(); }
    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }
    void clear() { grads_.clear(); }

private:
    std::map<std::string, Tensor> grads_;
};

struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    bool conv_kernel = false;  // L2 weight decay applies to these only
};
using ParamSet = std::vector<ParamRef>;

/// One differentiable layer. forward(train) caches what backward needs;
/// forward(infer) is pure and safe to call concurrently on a frozen layer.
class Layer {
public:
    virtual ~Layer() = default;

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

    virtual std::string kind() const = 0;
    virtual Tensor forward(const Tensor& x, Mode mode) = 0;

    // Gradient wrt the layer input; parameter gradients accumulate into
    // `grads` under this layer's parameter names. Requires a preceding
    // forward(train) call.
    virtual Tensor backward(const Tensor& grad_out, GradStore& grads) = 0;

    virtual void collect_params(ParamSet& out) = 0;
    virtual void init_params(RngStream&) {}
    virtual std::unique_ptr<Layer> clone() const = 0;

protected:
    void require_cache(bool have) const;

private:
    std::string name_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(std::size_t in_width, std::size_t out_width, Activation act);

    std::string kind() const override { return "dense"; }
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out, GradStore& grads) override;
    void collect_params(ParamSet& out) override;
    void init_params(RngStream& rng) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

    std::size_t in_width() const { return in_width_; }
    std::size_t out_width() const { return out_width_; }
    Activation activation() const { return act_; }
    Tensor& weights() { return weights_; }
    const Tensor& weights() const { return weights_; }
    Tensor& bias() { return bias_; }
    const Tensor& bias() const { return bias_; }

private:
    std::size_t in_width_, out_width_;
    Activation act_;
    Tensor weights_;  // [in x out]
    Tensor bias_;     // [out]
    Tensor cached_in_, cached_out_;
    bool has_cache_ = false;
};

class Conv1DLayer final : public Layer {
public:
    Conv1DLayer(std::size_t in_len, int kernel, int stride, Padding padding,
                std::size_t c_in, std::size_t c_out, Activation act);

    std::string kind() const override { return "conv1d"; }
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out, GradStore& grads) override;
    void collect_params(ParamSet& out) override;
    void init_params(RngStream& rng) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1DLayer>(*this); }

    const Conv1DGeom& geom() const { return geom_; }
    std::size_t c_in() const { return c_in_; }
    std::size_t c_out() const { return c_out_; }
    Activation activation() const { return act_; }
    Tensor& kernel() { return kernel_; }
    const Tensor& kernel() const { return kernel_; }
    Tensor& bias() { return bias_; }
    const Tensor& bias() const { return bias_; }

private:
    Conv1DGeom geom_;
    std::size_t c_in_, c_out_;
    Activation act_;
    Tensor kernel_;  // [k x c_in x c_out]
    Tensor bias_;    // [c_out]
    Tensor cached_in_, cached_out_;
    bool has_cache_ = false;
};

/// Adjoint of a Conv1DLayer: maps the mirrored conv's output length back to
/// its input length, with independent weights. output_padding records how
/// many trailing positions only the bias reaches.
class TransposedConv1DLayer final : public Layer {
public:
    TransposedConv1DLayer(const Conv1DGeom& mirror_of, std::size_t c_in, std::size_t c_out,
                          Activation act);

    std::string kind() const override { return "tconv1d"; }
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out, GradStore& grads) override;
    void collect_params(ParamSet& out) override;
    void init_params(RngStream& rng) override;
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<TransposedConv1DLayer>(*this);
    }

    const Conv1DGeom& mirror() const { return mirror_; }
    std::size_t in_len() const { return mirror_.out_len; }
    std::size_t out_len() const { return mirror_.in_len; }
    int output_padding() const { return output_padding_; }
    std::size_t c_in() const { return c_in_; }
    std::size_t c_out() const { return c_out_; }
    Activation activation() const { return act_; }
    Tensor& kernel() { return kernel_; }
    const Tensor& kernel() const { return kernel_; }
    Tensor& bias() { return bias_; }
    const Tensor& bias() const { return bias_; }

private:
    Conv1DGeom mirror_;
    int output_padding_ = 0;
    std::size_t c_in_, c_out_;
    Activation act_;
    Tensor kernel_;  // [k x c_in x c_out]
    Tensor bias_;    // [c_out]
    Tensor cached_in_, cached_out_;
    bool has_cache_ = false;
};

/// Batch normalization over every axis except the last (channels).
/// Train mode uses batch statistics and folds them into the running
/// estimates; infer mode is a fixed affine map using the running stats.
class BatchNorm1D final : public Layer {
public:
    explicit BatchNorm1D(std::size_t channels, double momentum = 0.99, double epsilon = 1e-5);

    std::string kind() const override { return "batchnorm"; }
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out, GradStore& grads) override;
    void collect_params(ParamSet& out) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm1D>(*this); }

    std::size_t channels() const { return channels_; }
    double momentum() const { return momentum_; }
    double epsilon() const { return epsilon_; }
    Tensor& gamma() { return gamma_; }
    const Tensor& gamma() const { return gamma_; }
    Tensor& beta() { return beta_; }
    const Tensor& beta() const { return beta_; }
    Tensor& running_mean() { return running_mean_; }
    const Tensor& running_mean() const { return running_mean_; }
    Tensor& running_var() { return running_var_; }
    const Tensor& running_var() const { return running_var_; }

private:
    std::size_t channels_;
    double momentum_, epsilon_;
    Tensor gamma_, beta_;
    Tensor running_mean_, running_var_;
    // train-pass cache
    Tensor cached_xhat_;
    std::vector<double> cached_invstd_;
    std::vector<std::size_t> cached_shape_;
    bool has_cache_ = false;
};

/// [B x n] -> [B x n x 1]; lets conv stacks consume flat flow vectors.
class ToChannelsLayer final : public Layer {
public:
    std::string kind() const override { return "to_channels"; }
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out, GradStore& grads) override;
    void collect_params(ParamSet&) override {}
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<ToChannelsLayer>(*this);
    }

private:
    bool has_cache_ = false;
};

/// [B x a x b] -> [B x a*b].
class FlattenLayer final : public Layer {
public:
    std::string kind() const override { return "flatten"; }
    Tensor forward(const Tensor& x, Mode mode) override;
    Tensor backward(const Tensor& grad_out, GradStore& grads) override;
    void collect_params(ParamSet&) override {}
    std::unique_ptr<Layer> clone() const override { return std::make_unique<FlattenLayer>(*this); }

private:
    std::vector<std::size_t> cached_shape_;
    bool has_cache_ = false;
};

}  // namespace flowvae
