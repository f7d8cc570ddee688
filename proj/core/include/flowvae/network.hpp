#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowvae/layers.hpp"

namespace flowvae {

/// Ordered stack of layers sharing a name prefix. Copying deep-copies the
/// layers, so models keep value semantics.
class LayerStack {
public:
    LayerStack() = default;
    explicit LayerStack(std::string prefix) : prefix_(std::move(prefix)) {}

    LayerStack(const LayerStack& other);
    LayerStack& operator=(const LayerStack& other);
    LayerStack(LayerStack&&) noexcept = default;
    LayerStack& operator=(LayerStack&&) noexcept = default;

    Layer& add(std::unique_ptr<Layer> layer);

    std::size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }
    Layer& operator[](std::size_t i) { return *layers_[i]; }
    const Layer& operator[](std::size_t i) const { return *layers_[i]; }

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out, GradStore& grads);

    void collect_params(ParamSet& out);
    void init_params(RngStream& rng);

    const std::string& prefix() const { return prefix_; }

private:
    std::string prefix_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    bool pass = true;
    std::vector<std::string> failed;
    std::string summary() const;
};

/// Compares analytic gradients against central finite differences of
/// `loss`. `loss` must re-evaluate the objective at the current parameter
/// values; parameters are perturbed in place and restored. A parameter
/// without an entry in `analytic` is treated as all-zero gradient.
GradCheckReport grad_check_params(const ParamSet& params, const std::function<double()>& loss,
                                  const GradStore& analytic, double h, double tol);

/// Convenience form for a plain classification stack: loss is the mean
/// softmax cross-entropy of the stack output against `labels`. An empty
/// parameter set passes vacuously.
GradCheckReport grad_check(LayerStack& net, const Tensor& x, const std::vector<int>& labels,
                           double h, double tol);

}  // namespace flowvae
