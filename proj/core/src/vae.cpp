#include "flowvae/vae.hpp"

#include <cmath>
#include <cstring>

#include "flowvae/errors.hpp"

namespace flowvae {

VaeModel build_vae(const Preset& preset, std::size_t input_width, RngStream& rng) {
    const auto chain = preset_shape_chain(preset, input_width);
    VaeModel model;
    model.input_width = input_width;
    model.latent_dim = chain.back();

    if (preset.layer_type == LayerKind::conv) {
        std::vector<Conv1DGeom> geoms;
        model.encoder.add(std::make_unique<ToChannelsLayer>());
        for (std::size_t i = 0; i < 3; ++i) {
            const Padding pad = preset.strides[i] > 1 ? Padding::half : Padding::valid;
            auto conv = std::make_unique<Conv1DLayer>(chain[i], preset.kernels[i],
                                                      preset.strides[i], pad, 1, 1,
                                                      Activation::relu);
            geoms.push_back(conv->geom());
            model.encoder.add(std::move(conv));
            model.encoder.add(std::make_unique<BatchNorm1D>(1));
        }
        model.encoder.add(std::make_unique<FlattenLayer>());

        model.decoder.add(std::make_unique<ToChannelsLayer>());
        for (std::size_t i = 0; i < 3; ++i) {
            const Conv1DGeom& mirror = geoms[2 - i];
            const bool last = i == 2;
            model.decoder.add(std::make_unique<TransposedConv1DLayer>(
                mirror, 1, 1, last ? Activation::linear : Activation::relu));
            if (!last) model.decoder.add(std::make_unique<BatchNorm1D>(1));
        }
        model.decoder.add(std::make_unique<FlattenLayer>());
    } else {
        for (std::size_t i = 0; i < 3; ++i) {
            model.encoder.add(std::make_unique<DenseLayer>(chain[i], chain[i + 1],
                                                           Activation::relu));
            model.encoder.add(std::make_unique<BatchNorm1D>(chain[i + 1]));
        }
        for (std::size_t i = 0; i < 3; ++i) {
            const bool last = i == 2;
            model.decoder.add(std::make_unique<DenseLayer>(
                chain[3 - i], chain[2 - i], last ? Activation::linear : Activation::relu));
            if (!last) model.decoder.add(std::make_unique<BatchNorm1D>(chain[2 - i]));
        }
    }

    model.mu_layer = DenseLayer(model.latent_dim, model.latent_dim, Activation::linear);
    model.mu_layer.set_name("mu");
    model.logvar_layer = DenseLayer(model.latent_dim, model.latent_dim, Activation::linear);
    model.logvar_layer.set_name("logvar");

    model.encoder.init_params(rng);
    model.mu_layer.init_params(rng);
    model.logvar_layer.init_params(rng);
    model.decoder.init_params(rng);
    return model;
}

std::pair<Tensor, Tensor> encode(VaeModel& model, const Tensor& x, Mode mode) {
    if (x.rank() != 2 || x.extent(1) != model.input_width) {
        throw DimensionError("encode: expected [B x " + std::to_string(model.input_width) +
                             "] input");
    }
    Tensor h = model.encoder.forward(x, mode);
    Tensor mu = model.mu_layer.forward(h, mode);
    Tensor logvar = model.logvar_layer.forward(h, mode);
    return {std::move(mu), std::move(logvar)};
}

LatentSample sample_latent(const Tensor& mu, const Tensor& logvar, RngStream& rng) {
    Tensor eps(mu.shape());
    rng.fill_normal(eps);
    return sample_latent_with_eps(mu, logvar, std::move(eps));
}

LatentSample sample_latent_with_eps(const Tensor& mu, const Tensor& logvar, Tensor eps) {
    if (!mu.same_shape(logvar) || !mu.same_shape(eps)) {
        throw DimensionError("sample_latent: mu/logvar/eps shape mismatch");
    }
    LatentSample s;
    s.mu = mu;
    s.logvar = logvar;
    s.eps = std::move(eps);
    s.z = Tensor(mu.shape());
    for (std::size_t i = 0; i < s.z.size(); ++i) {
        s.z[i] = s.mu[i] + std::exp(0.5 * s.logvar[i]) * s.eps[i];
    }
    return s;
}

double kl_loss(const Tensor& mu, const Tensor& logvar) {
    if (!mu.same_shape(logvar)) throw DimensionError("kl_loss: mu/logvar shape mismatch");
    const std::size_t batch = mu.extent(0);
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        total += -0.5 * (1.0 + logvar[i] - mu[i] * mu[i] - std::exp(logvar[i]));
    }
    const double mean = total / static_cast<double>(batch);
    // Non-negative analytically; keep rounding dust out.
    return mean < 0.0 ? 0.0 : mean;
}

Tensor decode(VaeModel& model, const Tensor& z, Mode mode) {
    if (z.rank() != 2 || z.extent(1) != model.latent_dim) {
        throw DimensionError("decode: expected [B x " + std::to_string(model.latent_dim) +
                             "] latent input");
    }
    return model.decoder.forward(z, mode);
}

double reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
    if (!x.same_shape(x_hat)) throw DimensionError("reconstruction_loss: shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x_hat[i] - x[i];
        total += d * d;
    }
    // (1/n per row) averaged over rows == sum / size.
    return total / static_cast<double>(x.size());
}

Tensor reconstruction_loss_grad(const Tensor& x, const Tensor& x_hat) {
    if (!x.same_shape(x_hat)) throw DimensionError("reconstruction_loss_grad: shape mismatch");
    Tensor g(x.shape());
    const double scale = 2.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] = scale * (x_hat[i] - x[i]);
    }
    return g;
}

std::vector<double> per_flow_reconstruction_loss(const Tensor& x, const Tensor& x_hat) {
    if (!x.same_shape(x_hat)) throw DimensionError("per_flow_reconstruction_loss: shape mismatch");
    const std::size_t batch = x.extent(0);
    const std::size_t width = x.size() / batch;
    std::vector<double> out(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x.data() + b * width;
        const double* hr = x_hat.data() + b * width;
        double acc = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            const double d = hr[i] - xr[i];
            acc += d * d;
        }
        out[b] = acc / static_cast<double>(width);
    }
    return out;
}

VaeOutput vae_forward(VaeModel& model, const Tensor& x, RngStream& rng, Mode mode) {
    auto [mu, logvar] = encode(model, x, mode);
    Tensor eps(mu.shape());
    rng.fill_normal(eps);
    VaeOutput out;
    out.sample = sample_latent_with_eps(mu, logvar, std::move(eps));
    out.x_hat = decode(model, out.sample.z, mode);
    out.kl = kl_loss(out.sample.mu, out.sample.logvar);
    out.rloss = reconstruction_loss(x, out.x_hat);
    return out;
}

VaeOutput vae_forward_with_eps(VaeModel& model, const Tensor& x, Tensor eps, Mode mode) {
    auto [mu, logvar] = encode(model, x, mode);
    VaeOutput out;
    out.sample = sample_latent_with_eps(mu, logvar, std::move(eps));
    out.x_hat = decode(model, out.sample.z, mode);
    out.kl = kl_loss(out.sample.mu, out.sample.logvar);
    out.rloss = reconstruction_loss(x, out.x_hat);
    return out;
}

Tensor vae_backward(VaeModel& model, const LatentSample& sample, const Tensor* d_xhat,
                    const Tensor* d_z, double kl_weight, GradStore& grads) {
    const std::size_t batch = sample.mu.extent(0);
    const std::size_t latent = sample.mu.extent(1);

    // Gradient arriving at z: head contribution plus decoder backprop.
    Tensor g_z({batch, latent});
    if (d_z) {
        if (!d_z->same_shape(g_z)) throw DimensionError("vae_backward: d_z shape mismatch");
        g_z.add(*d_z);
    }
    if (d_xhat) {
        g_z.add(model.decoder.backward(*d_xhat, grads));
    }

    // z = mu + exp(logvar/2) * eps; KL gradients are closed-form.
    Tensor g_mu({batch, latent});
    Tensor g_logvar({batch, latent});
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < g_z.size(); ++i) {
        g_mu[i] = g_z[i] + kl_weight * sample.mu[i] * inv_b;
        g_logvar[i] = g_z[i] * 0.5 * std::exp(0.5 * sample.logvar[i]) * sample.eps[i] +
                      kl_weight * (std::exp(sample.logvar[i]) - 1.0) * 0.5 * inv_b;
    }

    Tensor g_enc = model.mu_layer.backward(g_mu, grads);
    g_enc.add(model.logvar_layer.backward(g_logvar, grads));
    return model.encoder.backward(g_enc, grads);
}

void collect_vae_params(VaeModel& model, ParamSet& out) {
    model.encoder.collect_params(out);
    model.mu_layer.collect_params(out);
    model.logvar_layer.collect_params(out);
    model.decoder.collect_params(out);
}

namespace {

void hash_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
}

void hash_tensor(std::uint64_t& h, const Tensor& t) {
    for (double v : t.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        hash_bytes(h, &bits, sizeof(bits));
    }
}

void hash_stack(std::uint64_t& h, const LayerStack& stack) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const Layer& l = stack[i];
        if (const auto* d = dynamic_cast<const DenseLayer*>(&l)) {
            hash_tensor(h, d->weights());
            hash_tensor(h, d->bias());
        } else if (const auto* c = dynamic_cast<const Conv1DLayer*>(&l)) {
            hash_tensor(h, c->kernel());
            hash_tensor(h, c->bias());
        } else if (const auto* t = dynamic_cast<const TransposedConv1DLayer*>(&l)) {
            hash_tensor(h, t->kernel());
            hash_tensor(h, t->bias());
        } else if (const auto* bn = dynamic_cast<const BatchNorm1D*>(&l)) {
            hash_tensor(h, bn->gamma());
            hash_tensor(h, bn->beta());
            hash_tensor(h, bn->running_mean());
            hash_tensor(h, bn->running_var());
        }
    }
}

}  // namespace

std::uint64_t weights_checksum(const VaeModel& model) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    hash_stack(h, model.encoder);
    hash_tensor(h, model.mu_layer.weights());
    hash_tensor(h, model.mu_layer.bias());
    hash_tensor(h, model.logvar_layer.weights());
    hash_tensor(h, model.logvar_layer.bias());
    hash_stack(h, model.decoder);
    return h;
}

}  // namespace flowvae
