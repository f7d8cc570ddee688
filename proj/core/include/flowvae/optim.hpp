#pragma once

#include <map>
#include <string>

#include "flowvae/layers.hpp"
#include "flowvae/tensor.hpp"

namespace flowvae {

struct OptimHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Ridge penalty on convolutional kernels; applied via l2_penalty before
    // the Adam step, never inside it.
    double weight_decay = 1e-5;

    void validate() const;
};

/// Per-parameter first/second moment estimates plus the shared step count.
struct AdamState {
    struct Moments {
        Tensor m, v;
    };
    std::map<std::string, Moments> moments;
    long step_count = 0;
};

/// One bias-corrected Adam update: t += 1, m/v updated from grads,
/// theta -= lr * m_hat / (sqrt(v_hat) + eps). Every parameter must have a
/// gradient entry (ConsistencyError otherwise). Deterministic.
void adam_step(ParamSet& params, const GradStore& grads, AdamState& state,
               const OptimHyper& hyper);

/// L2 (ridge) penalty over conv kernels only: returns lambda * sum(w^2) and,
/// when grads is non-null, adds 2 * lambda * w to each kernel gradient.
/// Dense weights and every bias are untouched.
double l2_penalty(const ParamSet& params, double lambda, GradStore* grads);

}  // namespace flowvae
