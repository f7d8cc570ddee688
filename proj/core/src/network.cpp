#include "flowvae/network.hpp"

#include <cmath>
#include <sstream>

#include "flowvae/errors.hpp"

namespace flowvae {

LayerStack::LayerStack(const LayerStack& other) : prefix_(other.prefix_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

LayerStack& LayerStack::operator=(const LayerStack& other) {
    if (this == &other) return *this;
    prefix_ = other.prefix_;
    layers_.clear();
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
    return *this;
}

Layer& LayerStack::add(std::unique_ptr<Layer> layer) {
    layer->set_name(prefix_ + "." + std::to_string(layers_.size()) + "." + layer->kind());
    layers_.push_back(std::move(layer));
    return *layers_.back();
}

Tensor LayerStack::forward(const Tensor& x, Mode mode) {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
}

Tensor LayerStack::backward(const Tensor& grad_out, GradStore& grads) {
    Tensor g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        g = (*it)->backward(g, grads);
    }
    return g;
}

void LayerStack::collect_params(ParamSet& out) {
    for (auto& l : layers_) l->collect_params(out);
}

void LayerStack::init_params(RngStream& rng) {
    for (auto& l : layers_) l->init_params(rng);
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL") << " (tol " << tol << ", " << entries.size() << " params)";
    for (const auto& e : entries) {
        os << "\n  " << e.param << ": max rel err " << e.max_rel_err;
    }
    return os.str();
}

GradCheckReport grad_check_params(const ParamSet& params, const std::function<double()>& loss,
                                  const GradStore& analytic, double h, double tol) {
    if (h <= 0.0) throw ArgumentError("grad_check: h must be positive");
    GradCheckReport report;
    report.tol = tol;
    for (const auto& p : params) {
        GradCheckEntry entry;
        entry.param = p.name;
        Tensor& value = *p.value;
        const bool have_grad = analytic.contains(p.name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            value[i] = orig + h;
            const double up = loss();
            value[i] = orig - h;
            const double down = loss();
            value[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double a = have_grad ? analytic.at(p.name)[i] : 0.0;
            const double denom = std::max(std::abs(a) + std::abs(numeric), 1e-5);
            const double rel = std::abs(a - numeric) / denom;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
            }
        }
        if (entry.max_rel_err >= tol) {
            report.pass = false;
            report.failed.push_back(p.name);
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

namespace {

// Mean softmax cross-entropy; value only, used as the finite-difference
// objective for the stack-level check.
double xent_value(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
        const int y = labels[b];
        total += -(row[static_cast<std::size_t>(y)] - mx - std::log(sum));
    }
    return total / static_cast<double>(batch);
}

}  // namespace

GradCheckReport grad_check(LayerStack& net, const Tensor& x, const std::vector<int>& labels,
                           double h, double tol) {
    if (x.rank() < 2 || labels.size() != x.extent(0)) {
        throw ArgumentError("grad_check: labels must match batch size");
    }
    ParamSet params;
    net.collect_params(params);

    // Analytic pass: forward in train mode, then backprop the xent gradient
    // (softmax - one_hot) / B.
    Tensor logits = net.forward(x, Mode::train);
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    Tensor probs = activation_forward(logits, Activation::softmax);
    Tensor dlogits({batch, classes});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = (static_cast<int>(c) == labels[b]) ? 1.0 : 0.0;
            dlogits.at(b, c) = (probs.at(b, c) - onehot) / static_cast<double>(batch);
        }
    }
    GradStore grads;
    net.backward(dlogits, grads);

    auto loss = [&]() { return xent_value(net.forward(x, Mode::train), labels); };
    return grad_check_params(params, loss, grads, h, tol);
}

}  // namespace flowvae
