#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "flowvae/network.hpp"
#include "flowvae/presets.hpp"
#include "flowvae/rng.hpp"

namespace flowvae {

/// One reparameterized draw: z = mu + exp(logvar/2) * eps, elementwise.
struct LatentSample {
    Tensor mu, logvar, eps, z;
};

/// Encoder stack, latent mean/log-variance heads, mirrored decoder stack.
/// The decoder ends exactly at the encoder's input width; the latent size
/// is the final entry of the preset's shape chain.
struct VaeModel {
    LayerStack encoder{"enc"};
    DenseLayer mu_layer{0, 0, Activation::linear};
    DenseLayer logvar_layer{0, 0, Activation::linear};
    LayerStack decoder{"dec"};
    std::size_t input_width = 0;
    std::size_t latent_dim = 0;
};

/// Builds the encoder/latent/decoder geometry for a preset. Hidden layers
/// are relu, the latent heads and the decoder output are linear. Conv
/// presets run a single channel so layer widths match the shape chain.
VaeModel build_vae(const Preset& preset, std::size_t input_width, RngStream& rng);

std::pair<Tensor, Tensor> encode(VaeModel& model, const Tensor& x, Mode mode);

LatentSample sample_latent(const Tensor& mu, const Tensor& logvar, RngStream& rng);
LatentSample sample_latent_with_eps(const Tensor& mu, const Tensor& logvar, Tensor eps);

/// Closed-form KL divergence from N(mu, exp(logvar)) to N(0, 1):
/// per row -1/2 * sum_j (1 + logvar_j - mu_j^2 - exp(logvar_j)), averaged
/// over the batch. Always >= 0.
double kl_loss(const Tensor& mu, const Tensor& logvar);

Tensor decode(VaeModel& model, const Tensor& z, Mode mode);

/// Mean squared error (1/n) * sum_i (x_hat_i - x_i)^2, averaged over the batch.
double reconstruction_loss(const Tensor& x, const Tensor& x_hat);

/// d(reconstruction_loss)/d(x_hat) = 2 (x_hat - x) / (n * B).
Tensor reconstruction_loss_grad(const Tensor& x, const Tensor& x_hat);

/// Per-row MSE, no batch averaging; the LBD detector's scalar feature.
std::vector<double> per_flow_reconstruction_loss(const Tensor& x, const Tensor& x_hat);

struct VaeOutput {
    LatentSample sample;
    Tensor x_hat;
    double kl = 0.0;
    double rloss = 0.0;
};

VaeOutput vae_forward(VaeModel& model, const Tensor& x, RngStream& rng, Mode mode);
VaeOutput vae_forward_with_eps(VaeModel& model, const Tensor& x, Tensor eps, Mode mode);

/// Backpropagates the attached losses through the whole VAE. d_xhat is the
/// gradient at the decoder output (null when the R term is off), d_z the
/// gradient arriving at z from a head (null when absent), kl_weight the
/// multiplier for the closed-form KL gradients injected at mu/logvar.
/// Requires the matching train-mode forward; returns dLoss/dx.
Tensor vae_backward(VaeModel& model, const LatentSample& sample, const Tensor* d_xhat,
                    const Tensor* d_z, double kl_weight, GradStore& grads);

void collect_vae_params(VaeModel& model, ParamSet& out);

/// FNV-1a over every weight, bias, and batch-norm statistic. Two models
/// with bit-identical parameters hash equally; used to police the LBD
/// stage-2 stop-gradient contract.
std::uint64_t weights_checksum(const VaeModel& model);

}  // namespace flowvae
