#include "flowvae/optim.hpp"

#include <cmath>

#include "flowvae/errors.hpp"

namespace flowvae {

void OptimHyper::validate() const {
    if (learning_rate <= 0.0) throw ArgumentError("optim: learning rate must be positive");
    if (beta1 <= 0.0 || beta1 >= 1.0) throw ArgumentError("optim: beta1 must be in (0,1)");
    if (beta2 <= 0.0 || beta2 >= 1.0) throw ArgumentError("optim: beta2 must be in (0,1)");
    if (epsilon <= 0.0) throw ArgumentError("optim: epsilon must be positive");
    if (weight_decay < 0.0) throw ArgumentError("optim: weight decay must be >= 0");
}

void adam_step(ParamSet& params, const GradStore& grads, AdamState& state,
               const OptimHyper& hyper) {
    hyper.validate();
    // Fail before touching anything if a gradient is missing.
    for (const auto& p : params) {
        if (!grads.contains(p.name)) {
            throw ConsistencyError("adam_step: missing gradient for parameter " + p.name);
        }
    }
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);

    for (auto& p : params) {
        const Tensor& g = grads.at(p.name);
        Tensor& theta = *p.value;
        if (!g.same_shape(theta)) {
            throw ConsistencyError("adam_step: gradient shape mismatch for " + p.name);
        }
        auto it = state.moments.find(p.name);
        if (it == state.moments.end()) {
            it = state.moments.emplace(p.name, AdamState::Moments{Tensor(theta.shape()),
                                                                  Tensor(theta.shape())}).first;
        }
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
        }
    }
}

double l2_penalty(const ParamSet& params, double lambda, GradStore* grads) {
    if (lambda < 0.0) throw ArgumentError("l2_penalty: lambda must be >= 0");
    double penalty = 0.0;
    if (lambda == 0.0) return 0.0;
    for (const auto& p : params) {
        if (!p.conv_kernel) continue;
        const Tensor& w = *p.value;
        for (double x : w.values()) penalty += x * x;
        if (grads) {
            Tensor& g = grads->ensure(p.name, w.shape());
            for (std::size_t i = 0; i < w.size(); ++i) g[i] += 2.0 * lambda * w[i];
        }
    }
    return lambda * penalty;
}

}  // namespace flowvae
