#include "flowvae/layers.hpp"

#include <cmath>

#include "flowvae/errors.hpp"

namespace flowvae {

std::string padding_name(Padding p) {
    return p == Padding::half ? "half" : "valid";
}

Padding padding_from_name(const std::string& name) {
    if (name == "half") return Padding::half;
    if (name == "valid") return Padding::valid;
    throw ArgumentError("unknown padding: " + name);
}

std::size_t conv1d_output_len(std::size_t in_len, int kernel, int stride, Padding padding) {
    if (in_len < 1) throw DimensionError("conv1d_output_len: input length must be positive");
    if (kernel < 1 || stride < 1) throw ArgumentError("conv1d_output_len: kernel and stride must be >= 1");
    const std::size_t k = static_cast<std::size_t>(kernel);
    const std::size_t s = static_cast<std::size_t>(stride);
    if (padding == Padding::half) {
        return (in_len + s - 1) / s;
    }
    if (in_len < k) {
        throw DimensionError("conv1d_output_len: input shorter than kernel with valid padding");
    }
    return (in_len - k) / s + 1;
}

std::size_t receptive_field(const std::vector<int>& kernels, const std::vector<int>& strides) {
    if (kernels.empty() || strides.empty()) {
        throw ArgumentError("receptive_field: empty kernel/stride lists");
    }
    if (kernels.size() != strides.size()) {
        throw ArgumentError("receptive_field: kernel/stride lists differ in length");
    }
    std::size_t rf = 1;
    std::size_t jump = 1;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
        if (kernels[i] < 1 || strides[i] < 1) {
            throw ArgumentError("receptive_field: kernels and strides must be >= 1");
        }
        rf += static_cast<std::size_t>(kernels[i] - 1) * jump;
        jump *= static_cast<std::size_t>(strides[i]);
    }
    return rf;
}

Conv1DGeom make_conv1d_geom(std::size_t in_len, int kernel, int stride, Padding padding) {
    Conv1DGeom g;
    g.in_len = in_len;
    g.kernel = kernel;
    g.stride = stride;
    g.padding = padding;
    g.out_len = conv1d_output_len(in_len, kernel, stride, padding);
    if (padding == Padding::half) {
        const long cover = static_cast<long>(g.out_len - 1) * stride + kernel;
        const long total = std::max(cover - static_cast<long>(in_len), 0L);
        g.pad_left = static_cast<int>(total / 2);
        g.pad_right = static_cast<int>(total - total / 2);
    }
    return g;
}

// ---------------------------------------------------------------------------
// GradStore

Tensor& GradStore::ensure(const std::string& name, const std::vector<std::size_t>& shape) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
        it = grads_.emplace(name, Tensor(shape)).first;
    } else if (it->second.shape() != shape) {
        throw ConsistencyError("gradient shape mismatch for parameter " + name);
    }
    return it->second;
}

Tensor& GradStore::at(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ConsistencyError("missing gradient for parameter " + name);
    return it->second;
}

const Tensor& GradStore::at(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ConsistencyError("missing gradient for parameter " + name);
    return it->second;
}

bool GradStore::contains(const std::string& name) const {
    return grads_.count(name) != 0;
}

void Layer::require_cache(bool have) const {
    if (!have) {
        throw StateError("backward on layer '" + name_ + "' without a cached forward pass");
    }
}

// ---------------------------------------------------------------------------
// DenseLayer

DenseLayer::DenseLayer(std::size_t in_width, std::size_t out_width, Activation act)
    : in_width_(in_width), out_width_(out_width), act_(act) {
    // Zero widths give an empty placeholder (models hold these before a
    // builder fills them in); forward rejects it via the width check.
    if (in_width > 0 && out_width > 0) {
        weights_ = Tensor({in_width, out_width});
        bias_ = Tensor({out_width});
    }
}

void DenseLayer::init_params(RngStream& rng) {
    // Fan-in scaled uniform; He-style bound for relu, Glorot otherwise.
    const double limit = act_ == Activation::relu
                             ? std::sqrt(6.0 / static_cast<double>(in_width_))
                             : std::sqrt(6.0 / static_cast<double>(in_width_ + out_width_));
    for (double& w : weights_.values()) w = rng.uniform(-limit, limit);
    bias_.fill(0.0);
}

Tensor DenseLayer::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 2 || x.extent(1) != in_width_) {
        throw DimensionError("dense forward: expected [B x " + std::to_string(in_width_) + "] input");
    }
    const std::size_t batch = x.extent(0);
    Tensor pre({batch, out_width_});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xin = x.data() + b * in_width_;
        double* out = pre.data() + b * out_width_;
        for (std::size_t j = 0; j < out_width_; ++j) out[j] = bias_[j];
        for (std::size_t i = 0; i < in_width_; ++i) {
            const double xi = xin[i];
            if (xi == 0.0) continue;
            const double* wrow = weights_.data() + i * out_width_;
            for (std::size_t j = 0; j < out_width_; ++j) out[j] += xi * wrow[j];
        }
    }
    Tensor y = activation_forward(pre, act_);
    if (mode == Mode::train) {
        cached_in_ = x;
        cached_out_ = y;
        has_cache_ = true;
    }
    return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out, GradStore& grads) {
    require_cache(has_cache_);
    if (!grad_out.same_shape(cached_out_)) {
        throw DimensionError("dense backward: gradient shape mismatch");
    }
    const Tensor gpre = activation_backward(cached_out_, grad_out, act_);
    const std::size_t batch = cached_in_.extent(0);

    Tensor& dw = grads.ensure(name() + ".w", weights_.shape());
    Tensor& db = grads.ensure(name() + ".b", bias_.shape());
    Tensor dx({batch, in_width_});

    for (std::size_t b = 0; b < batch; ++b) {
        const double* xin = cached_in_.data() + b * in_width_;
        const double* g = gpre.data() + b * out_width_;
        for (std::size_t j = 0; j < out_width_; ++j) db[j] += g[j];
        for (std::size_t i = 0; i < in_width_; ++i) {
            double* dwrow = dw.data() + i * out_width_;
            const double* wrow = weights_.data() + i * out_width_;
            const double xi = xin[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < out_width_; ++j) {
                dwrow[j] += xi * g[j];
                acc += wrow[j] * g[j];
            }
            dx.at(b, i) = acc;
        }
    }
    return dx;
}

void DenseLayer::collect_params(ParamSet& out) {
    out.push_back({name() + ".w", &weights_, false});
    out.push_back({name() + ".b", &bias_, false});
}

// ---------------------------------------------------------------------------
// Conv1DLayer

Conv1DLayer::Conv1DLayer(std::size_t in_len, int kernel, int stride, Padding padding,
                         std::size_t c_in, std::size_t c_out, Activation act)
    : geom_(make_conv1d_geom(in_len, kernel, stride, padding)),
      c_in_(c_in),
      c_out_(c_out),
      act_(act),
      kernel_({static_cast<std::size_t>(kernel), c_in, c_out}),
      bias_({c_out}) {
    if (padding == Padding::half && stride <= 1) {
        throw ArgumentError("conv1d: half padding is reserved for stride > 1 layers");
    }
}

void Conv1DLayer::init_params(RngStream& rng) {
    const double fan_in = static_cast<double>(geom_.kernel) * static_cast<double>(c_in_);
    const double fan_out = static_cast<double>(geom_.kernel) * static_cast<double>(c_out_);
    const double limit = act_ == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                  : std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : kernel_.values()) w = rng.uniform(-limit, limit);
    bias_.fill(0.0);
}

Tensor Conv1DLayer::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 3 || x.extent(1) != geom_.in_len || x.extent(2) != c_in_) {
        throw DimensionError("conv1d forward: expected [B x " + std::to_string(geom_.in_len) +
                             " x " + std::to_string(c_in_) + "] input");
    }
    const std::size_t batch = x.extent(0);
    const std::size_t out_len = geom_.out_len;
    Tensor pre({batch, out_len, c_out_});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            double* out = pre.data() + (b * out_len + t) * c_out_;
            for (std::size_t co = 0; co < c_out_; ++co) out[co] = bias_[co];
            for (int i = 0; i < geom_.kernel; ++i) {
                const long pos = static_cast<long>(t) * geom_.stride + i - geom_.pad_left;
                if (pos < 0 || pos >= static_cast<long>(geom_.in_len)) continue;
                const double* xin = x.data() + (b * geom_.in_len + static_cast<std::size_t>(pos)) * c_in_;
                const double* w = kernel_.data() + static_cast<std::size_t>(i) * c_in_ * c_out_;
                for (std::size_t ci = 0; ci < c_in_; ++ci) {
                    const double xv = xin[ci];
                    for (std::size_t co = 0; co < c_out_; ++co) {
                        out[co] += xv * w[ci * c_out_ + co];
                    }
                }
            }
        }
    }
    Tensor y = activation_forward(pre, act_);
    if (mode == Mode::train) {
        cached_in_ = x;
        cached_out_ = y;
        has_cache_ = true;
    }
    return y;
}

Tensor Conv1DLayer::backward(const Tensor& grad_out, GradStore& grads) {
    require_cache(has_cache_);
    if (!grad_out.same_shape(cached_out_)) {
        throw DimensionError("conv1d backward: gradient shape mismatch");
    }
    const Tensor gpre = activation_backward(cached_out_, grad_out, act_);
    const std::size_t batch = cached_in_.extent(0);
    const std::size_t out_len = geom_.out_len;

    Tensor& dw = grads.ensure(name() + ".w", kernel_.shape());
    Tensor& db = grads.ensure(name() + ".b", bias_.shape());
    Tensor dx({batch, geom_.in_len, c_in_});

    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const double* g = gpre.data() + (b * out_len + t) * c_out_;
            for (std::size_t co = 0; co < c_out_; ++co) db[co] += g[co];
            for (int i = 0; i < geom_.kernel; ++i) {
                const long pos = static_cast<long>(t) * geom_.stride + i - geom_.pad_left;
                if (pos < 0 || pos >= static_cast<long>(geom_.in_len)) continue;
                const std::size_t xoff = (b * geom_.in_len + static_cast<std::size_t>(pos)) * c_in_;
                const double* xin = cached_in_.data() + xoff;
                double* dxp = dx.data() + xoff;
                const std::size_t woff = static_cast<std::size_t>(i) * c_in_ * c_out_;
                for (std::size_t ci = 0; ci < c_in_; ++ci) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < c_out_; ++co) {
                        dw[woff + ci * c_out_ + co] += xin[ci] * g[co];
                        acc += kernel_[woff + ci * c_out_ + co] * g[co];
                    }
                    dxp[ci] += acc;
                }
            }
        }
    }
    return dx;
}

void Conv1DLayer::collect_params(ParamSet& out) {
    out.push_back({name() + ".w", &kernel_, true});
    out.push_back({name() + ".b", &bias_, false});
}

// ---------------------------------------------------------------------------
// TransposedConv1DLayer

TransposedConv1DLayer::TransposedConv1DLayer(const Conv1DGeom& mirror_of, std::size_t c_in,
                                             std::size_t c_out, Activation act)
    : mirror_(mirror_of),
      c_in_(c_in),
      c_out_(c_out),
      act_(act),
      kernel_({static_cast<std::size_t>(mirror_of.kernel), c_in, c_out}),
      bias_({c_out}) {
    const long natural = static_cast<long>(mirror_.out_len - 1) * mirror_.stride + mirror_.kernel;
    output_padding_ = static_cast<int>(static_cast<long>(mirror_.in_len) + mirror_.pad_left +
                                       mirror_.pad_right - natural);
    if (output_padding_ < 0) {
        throw DimensionError("transposed conv: mirrored geometry cannot reach the pre-image length");
    }
}

void TransposedConv1DLayer::init_params(RngStream& rng) {
    const double fan_in = static_cast<double>(mirror_.kernel) * static_cast<double>(c_in_);
    const double fan_out = static_cast<double>(mirror_.kernel) * static_cast<double>(c_out_);
    const double limit = act_ == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                  : std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : kernel_.values()) w = rng.uniform(-limit, limit);
    bias_.fill(0.0);
}

Tensor TransposedConv1DLayer::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 3 || x.extent(1) != in_len() || x.extent(2) != c_in_) {
        throw DimensionError("tconv1d forward: expected [B x " + std::to_string(in_len()) + " x " +
                             std::to_string(c_in_) + "] input");
    }
    const std::size_t batch = x.extent(0);
    const std::size_t src_len = in_len();   // mirrored conv's output length
    const std::size_t dst_len = out_len();  // mirrored conv's input length
    Tensor pre({batch, dst_len, c_out_});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < dst_len; ++j) {
            double* out = pre.data() + (b * dst_len + j) * c_out_;
            for (std::size_t co = 0; co < c_out_; ++co) out[co] = bias_[co];
        }
        for (std::size_t t = 0; t < src_len; ++t) {
            const double* xin = x.data() + (b * src_len + t) * c_in_;
            for (int i = 0; i < mirror_.kernel; ++i) {
                const long j = static_cast<long>(t) * mirror_.stride + i - mirror_.pad_left;
                if (j < 0 || j >= static_cast<long>(dst_len)) continue;
                double* out = pre.data() + (b * dst_len + static_cast<std::size_t>(j)) * c_out_;
                const double* w = kernel_.data() + static_cast<std::size_t>(i) * c_in_ * c_out_;
                for (std::size_t ci = 0; ci < c_in_; ++ci) {
                    const double xv = xin[ci];
                    for (std::size_t co = 0; co < c_out_; ++co) {
                        out[co] += xv * w[ci * c_out_ + co];
                    }
                }
            }
        }
    }
    Tensor y = activation_forward(pre, act_);
    if (mode == Mode::train) {
        cached_in_ = x;
        cached_out_ = y;
        has_cache_ = true;
    }
    return y;
}

Tensor TransposedConv1DLayer::backward(const Tensor& grad_out, GradStore& grads) {
    require_cache(has_cache_);
    if (!grad_out.same_shape(cached_out_)) {
        throw DimensionError("tconv1d backward: gradient shape mismatch");
    }
    const Tensor gpre = activation_backward(cached_out_, grad_out, act_);
    const std::size_t batch = cached_in_.extent(0);
    const std::size_t src_len = in_len();
    const std::size_t dst_len = out_len();

    Tensor& dw = grads.ensure(name() + ".w", kernel_.shape());
    Tensor& db = grads.ensure(name() + ".b", bias_.shape());
    Tensor dx({batch, src_len, c_in_});

    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < dst_len; ++j) {
            const double* g = gpre.data() + (b * dst_len + j) * c_out_;
            for (std::size_t co = 0; co < c_out_; ++co) db[co] += g[co];
        }
        for (std::size_t t = 0; t < src_len; ++t) {
            const std::size_t xoff = (b * src_len + t) * c_in_;
            const double* xin = cached_in_.data() + xoff;
            double* dxp = dx.data() + xoff;
            for (int i = 0; i < mirror_.kernel; ++i) {
                const long j = static_cast<long>(t) * mirror_.stride + i - mirror_.pad_left;
                if (j < 0 || j >= static_cast<long>(dst_len)) continue;
                const double* g = gpre.data() + (b * dst_len + static_cast<std::size_t>(j)) * c_out_;
                const std::size_t woff = static_cast<std::size_t>(i) * c_in_ * c_out_;
                for (std::size_t ci = 0; ci < c_in_; ++ci) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < c_out_; ++co) {
                        dw[woff + ci * c_out_ + co] += xin[ci] * g[co];
                        acc += kernel_[woff + ci * c_out_ + co] * g[co];
                    }
                    dxp[ci] += acc;
                }
            }
        }
    }
    return dx;
}

void TransposedConv1DLayer::collect_params(ParamSet& out) {
    out.push_back({name() + ".w", &kernel_, true});
    out.push_back({name() + ".b", &bias_, false});
}

// ---------------------------------------------------------------------------
// BatchNorm1D

BatchNorm1D::BatchNorm1D(std::size_t channels, double momentum, double epsilon)
    : channels_(channels),
      momentum_(momentum),
      epsilon_(epsilon),
      gamma_({channels}),
      beta_({channels}),
      running_mean_({channels}),
      running_var_({channels}) {
    if (momentum <= 0.0 || momentum >= 1.0) throw ArgumentError("batchnorm: momentum must be in (0,1)");
    if (epsilon <= 0.0) throw ArgumentError("batchnorm: epsilon must be positive");
    gamma_.fill(1.0);
    running_var_.fill(1.0);
}

Tensor BatchNorm1D::forward(const Tensor& x, Mode mode) {
    if (x.rank() < 2 || x.shape().back() != channels_) {
        throw DimensionError("batchnorm forward: last axis must equal channel count");
    }
    const std::size_t n = x.size() / channels_;
    Tensor y(x.shape());

    if (mode == Mode::infer) {
        for (std::size_t r = 0; r < n; ++r) {
            const double* xin = x.data() + r * channels_;
            double* out = y.data() + r * channels_;
            for (std::size_t c = 0; c < channels_; ++c) {
                const double invstd = 1.0 / std::sqrt(running_var_[c] + epsilon_);
                out[c] = gamma_[c] * (xin[c] - running_mean_[c]) * invstd + beta_[c];
            }
        }
        return y;
    }

    if (n < 2) {
        throw DegenerateBatchError("batchnorm: train mode needs at least 2 samples per channel");
    }
    std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xin = x.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) mean[c] += xin[c];
    }
    for (std::size_t c = 0; c < channels_; ++c) mean[c] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* xin = x.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
            const double d = xin[c] - mean[c];
            var[c] += d * d;
        }
    }
    for (std::size_t c = 0; c < channels_; ++c) var[c] /= static_cast<double>(n);

    cached_xhat_ = Tensor(x.shape());
    cached_invstd_.assign(channels_, 0.0);
    for (std::size_t c = 0; c < channels_; ++c) {
        cached_invstd_[c] = 1.0 / std::sqrt(var[c] + epsilon_);
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double* xin = x.data() + r * channels_;
        double* xh = cached_xhat_.data() + r * channels_;
        double* out = y.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
            xh[c] = (xin[c] - mean[c]) * cached_invstd_[c];
            out[c] = gamma_[c] * xh[c] + beta_[c];
        }
    }
    for (std::size_t c = 0; c < channels_; ++c) {
        running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean[c];
        running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var[c];
    }
    cached_shape_ = x.shape();
    has_cache_ = true;
    return y;
}

Tensor BatchNorm1D::backward(const Tensor& grad_out, GradStore& grads) {
    require_cache(has_cache_);
    if (grad_out.shape() != cached_shape_) {
        throw DimensionError("batchnorm backward: gradient shape mismatch");
    }
    const std::size_t n = grad_out.size() / channels_;
    const double inv_n = 1.0 / static_cast<double>(n);

    Tensor& dgamma = grads.ensure(name() + ".gamma", gamma_.shape());
    Tensor& dbeta = grads.ensure(name() + ".beta", beta_.shape());

    std::vector<double> sum_g(channels_, 0.0), sum_gx(channels_, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* g = grad_out.data() + r * channels_;
        const double* xh = cached_xhat_.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
            sum_g[c] += g[c];
            sum_gx[c] += g[c] * xh[c];
        }
    }
    for (std::size_t c = 0; c < channels_; ++c) {
        dgamma[c] += sum_gx[c];
        dbeta[c] += sum_g[c];
    }

    Tensor dx(cached_shape_);
    for (std::size_t r = 0; r < n; ++r) {
        const double* g = grad_out.data() + r * channels_;
        const double* xh = cached_xhat_.data() + r * channels_;
        double* out = dx.data() + r * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
            out[c] = gamma_[c] * cached_invstd_[c] *
                     (g[c] - inv_n * sum_g[c] - xh[c] * inv_n * sum_gx[c]);
        }
    }
    return dx;
}

void BatchNorm1D::collect_params(ParamSet& out) {
    out.push_back({name() + ".gamma", &gamma_, false});
    out.push_back({name() + ".beta", &beta_, false});
}

// ---------------------------------------------------------------------------
// Shape plumbing

Tensor ToChannelsLayer::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 2) throw DimensionError("to_channels: expected [B x n] input");
    if (mode == Mode::train) has_cache_ = true;
    return x.reshaped({x.extent(0), x.extent(1), 1});
}

Tensor ToChannelsLayer::backward(const Tensor& grad_out, GradStore&) {
    require_cache(has_cache_);
    return grad_out.reshaped({grad_out.extent(0), grad_out.extent(1)});
}

Tensor FlattenLayer::forward(const Tensor& x, Mode mode) {
    if (x.rank() < 2) throw DimensionError("flatten: expected rank >= 2 input");
    if (mode == Mode::train) {
        cached_shape_ = x.shape();
        has_cache_ = true;
    }
    return x.reshaped({x.extent(0), x.size() / x.extent(0)});
}

Tensor FlattenLayer::backward(const Tensor& grad_out, GradStore&) {
    require_cache(has_cache_);
    return grad_out.reshaped(cached_shape_);
}

}  // namespace flowvae
