#include "flowvae/classifiers.hpp"

#include <cmath>

#include "flowvae/errors.hpp"
#include "flowvae/optim.hpp"

namespace flowvae {

double softmax_xent(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
    if (logits.rank() != 2) throw DimensionError("softmax_xent: logits must be [B x C]");
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    if (labels.size() != batch) throw ArgumentError("softmax_xent: label count mismatch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            throw ArgumentError("softmax_xent: label out of range");
        }
    }
    Tensor probs = activation_forward(logits, Activation::softmax);
    double total = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
        // -log softmax(logits)[label], computed in log space.
        total += -(row[static_cast<std::size_t>(labels[b])] - mx - std::log(sum));
    }
    const double loss = total / static_cast<double>(batch);
    if (dlogits) {
        *dlogits = Tensor({batch, classes});
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < classes; ++c) {
                const double onehot = static_cast<int>(c) == labels[b] ? 1.0 : 0.0;
                dlogits->at(b, c) = (probs.at(b, c) - onehot) * inv_b;
            }
        }
    }
    return loss;
}

double total_loss(double p, double r, double kl, const Preset& preset) {
    double total = 0.0;
    if (preset.loss_p) total += p;
    if (preset.loss_r) total += r;
    if (preset.loss_kl) total += preset.klm_or_zero() * kl;
    return total;
}

std::size_t effective_classes(const Preset& preset, const FeatureSchema& schema) {
    return preset.classification == ClassMode::binary ? 2 : schema.class_names.size();
}

int effective_label(const Preset& preset, const FeatureSchema& schema, int label) {
    if (preset.classification != ClassMode::binary) return label;
    return label == schema.benign_class() ? 0 : 1;
}

std::vector<std::string> effective_class_names(const Preset& preset,
                                               const FeatureSchema& schema) {
    if (preset.classification == ClassMode::binary) return {"Benign", "Malicious"};
    return schema.class_names;
}

namespace {

int argmax_lowest(const double* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (row[i] > row[best]) best = i;
    }
    return static_cast<int>(best);
}

double batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    std::size_t hits = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        if (argmax_lowest(logits.data() + b * classes, classes) == labels[b]) hits++;
    }
    return static_cast<double>(hits) / static_cast<double>(batch);
}

}  // namespace

std::pair<int, std::vector<double>> llc_predict(TrainedModel& model, std::span<const double> x) {
    if (x.size() != model.vae.input_width) {
        throw DimensionError("llc_predict: flow width does not match the model");
    }
    Tensor xt({1, x.size()}, std::vector<double>(x.begin(), x.end()));
    auto [mu, logvar] = encode(model.vae, xt, Mode::infer);
    (void)logvar;
    Tensor logits = model.llc.fc.forward(mu, Mode::infer);
    Tensor probs = activation_forward(logits, Activation::softmax);
    std::vector<double> p(probs.data(), probs.data() + probs.size());
    return {argmax_lowest(p.data(), p.size()), std::move(p)};
}

std::vector<int> llc_predict_batch(TrainedModel& model, const Tensor& x, Tensor* probs) {
    auto [mu, logvar] = encode(model.vae, x, Mode::infer);
    (void)logvar;
    Tensor logits = model.llc.fc.forward(mu, Mode::infer);
    const std::size_t batch = logits.extent(0);
    const std::size_t classes = logits.extent(1);
    std::vector<int> preds(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        preds[b] = argmax_lowest(logits.data() + b * classes, classes);
    }
    if (probs) *probs = activation_forward(logits, Activation::softmax);
    return preds;
}

namespace {

void zero_fill_grads(const ParamSet& params, GradStore& grads) {
    for (const auto& p : params) grads.ensure(p.name, p.value->shape());
}

struct ValSweep {
    double accuracy = 0.0;
    double p = 0.0, kl = 0.0, r = 0.0;
};

// Full-split evaluation on the noise-free path (z = mu, infer-mode batch
// norm); used for the val rows of the training log.
ValSweep llc_val_sweep(VaeModel& vae, LlcHead& head, const Dataset& val, const Preset& preset,
                       std::size_t batch_size) {
    ValSweep sweep;
    const std::size_t n = val.size();
    std::size_t hits = 0;
    double p_sum = 0.0, kl_sum = 0.0, r_sum = 0.0;
    std::size_t batches = 0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t take = std::min(batch_size, n - start);
        rows.resize(take);
        for (std::size_t i = 0; i < take; ++i) rows[i] = start + i;
        Tensor x = val.gather(rows);
        std::vector<int> labels(take);
        for (std::size_t i = 0; i < take; ++i) {
            labels[i] = effective_label(preset, val.schema(), val.label(rows[i]));
        }
        auto [mu, logvar] = encode(vae, x, Mode::infer);
        Tensor logits = head.fc.forward(mu, Mode::infer);
        for (std::size_t b = 0; b < take; ++b) {
            if (argmax_lowest(logits.data() + b * logits.extent(1), logits.extent(1)) ==
                labels[b]) {
                hits++;
            }
        }
        p_sum += softmax_xent(logits, labels);
        kl_sum += kl_loss(mu, logvar);
        if (preset.loss_r) {
            Tensor x_hat = decode(vae, mu, Mode::infer);
            r_sum += reconstruction_loss(x, x_hat);
        }
        batches++;
    }
    sweep.accuracy = n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
    sweep.p = p_sum / static_cast<double>(batches);
    sweep.kl = kl_sum / static_cast<double>(batches);
    sweep.r = r_sum / static_cast<double>(batches);
    return sweep;
}

}  // namespace

LlcTrainResult train_llc(const Dataset& train, const Dataset& val, const Preset& preset,
                         RngStream rng, const TrainOptions& options) {
    if (train.empty()) throw DataError("train_llc: empty training set");
    if (options.batch_size < 1) throw ArgumentError("train_llc: batch size must be >= 1");

    const std::size_t classes = effective_classes(preset, train.schema());
    LlcTrainResult result;
    result.model.preset = preset;
    result.model.schema = train.schema();

    RngStream init_rng = rng.fork(1);
    result.model.vae = build_vae(preset, train.width(), init_rng);
    result.model.llc.num_classes = classes;
    result.model.llc.fc = DenseLayer(result.model.vae.latent_dim, classes, Activation::linear);
    result.model.llc.fc.set_name("head");
    result.model.llc.fc.init_params(init_rng);

    VaeModel& vae = result.model.vae;
    LlcHead& head = result.model.llc;

    ParamSet params;
    collect_vae_params(vae, params);
    head.fc.collect_params(params);

    OptimHyper hyper;
    hyper.learning_rate = options.learning_rate.value_or(preset.learning_rate);
    AdamState opt_state;

    const long steps = options.steps.value_or(preset.steps);
    if (steps == 0) return result;

    BatchStream batches(train, options.batch_size, rng.fork(2));
    RngStream eps_rng = rng.fork(3);

    for (long step = 1; step <= steps; ++step) {
        Batch batch = batches.next();
        std::vector<int> labels(batch.labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            labels[i] = effective_label(preset, train.schema(), batch.labels[i]);
        }

        auto [mu, logvar] = encode(vae, batch.x, Mode::train);
        LatentSample sample = sample_latent(mu, logvar, eps_rng);
        Tensor logits = head.fc.forward(sample.z, Mode::train);

        Tensor dlogits;
        const double p = softmax_xent(logits, labels, &dlogits);
        const double kl = kl_loss(mu, logvar);
        double r = 0.0;
        Tensor x_hat, d_xhat;
        if (preset.loss_r) {
            x_hat = decode(vae, sample.z, Mode::train);
            r = reconstruction_loss(batch.x, x_hat);
            d_xhat = reconstruction_loss_grad(batch.x, x_hat);
        }
        const double total = total_loss(p, r, kl, preset);
        if (!std::isfinite(total)) {
            throw DivergedError("train_llc: non-finite loss at step " + std::to_string(step));
        }

        GradStore grads;
        zero_fill_grads(params, grads);
        Tensor d_z = head.fc.backward(dlogits, grads);
        vae_backward(vae, sample, preset.loss_r ? &d_xhat : nullptr, &d_z,
                     preset.loss_kl ? preset.klm_or_zero() : 0.0, grads);
        l2_penalty(params, hyper.weight_decay, &grads);
        adam_step(params, grads, opt_state, hyper);

        if (options.log_interval > 0 && step % options.log_interval == 0) {
            TrainLogRow row;
            row.step = step;
            row.split = "train";
            row.accuracy = batch_accuracy(logits, labels);
            row.p_loss = p;
            if (preset.loss_kl) row.kl_loss = kl;
            if (preset.loss_r) row.r_loss = r;
            row.total_loss = total;
            result.log.push_back(row);

            if (!val.empty()) {
                const ValSweep sweep =
                    llc_val_sweep(vae, head, val, preset, options.batch_size);
                TrainLogRow vrow;
                vrow.step = step;
                vrow.split = "val";
                vrow.accuracy = sweep.accuracy;
                vrow.p_loss = sweep.p;
                if (preset.loss_kl) vrow.kl_loss = sweep.kl;
                if (preset.loss_r) vrow.r_loss = sweep.r;
                vrow.total_loss = total_loss(sweep.p, sweep.r, sweep.kl, preset);
                result.log.push_back(vrow);
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// LBD

VaeModel lbd_stage1_train(const Dataset& benign_only, const Preset& preset, RngStream rng,
                          const TrainOptions& options, std::vector<TrainLogRow>* log) {
    if (benign_only.empty()) throw DataError("lbd_stage1_train: empty dataset");
    const int benign = benign_only.schema().benign_class();
    std::vector<std::size_t> contaminated;
    for (std::size_t r = 0; r < benign_only.size(); ++r) {
        if (benign_only.label(r) != benign) {
            contaminated.push_back(r);
            if (contaminated.size() >= 8) break;
        }
    }
    if (!contaminated.empty()) {
        std::string msg = "lbd_stage1_train: non-benign rows in benign-only set:";
        for (std::size_t r : contaminated) msg += " " + std::to_string(r);
        throw ContaminationError(msg);
    }

    RngStream init_rng = rng.fork(1);
    VaeModel vae = build_vae(preset, benign_only.width(), init_rng);
    ParamSet params;
    collect_vae_params(vae, params);

    OptimHyper hyper;
    hyper.learning_rate = options.learning_rate.value_or(preset.learning_rate);
    AdamState opt_state;

    const long steps = options.steps.value_or(preset.steps1);
    BatchStream batches(benign_only, options.batch_size, rng.fork(2));
    RngStream eps_rng = rng.fork(3);

    for (long step = 1; step <= steps; ++step) {
        Batch batch = batches.next();
        auto [mu, logvar] = encode(vae, batch.x, Mode::train);
        LatentSample sample = sample_latent(mu, logvar, eps_rng);
        Tensor x_hat = decode(vae, sample.z, Mode::train);

        const double r = reconstruction_loss(batch.x, x_hat);
        const double kl = kl_loss(mu, logvar);
        const double total = r + preset.klm_or_zero() * kl;
        if (!std::isfinite(total)) {
            throw DivergedError("lbd_stage1_train: non-finite loss at step " +
                                std::to_string(step));
        }

        GradStore grads;
        zero_fill_grads(params, grads);
        Tensor d_xhat = reconstruction_loss_grad(batch.x, x_hat);
        vae_backward(vae, sample, &d_xhat, nullptr, preset.klm_or_zero(), grads);
        l2_penalty(params, hyper.weight_decay, &grads);
        adam_step(params, grads, opt_state, hyper);

        if (log && options.log_interval > 0 && step % options.log_interval == 0) {
            TrainLogRow row;
            row.step = step;
            row.split = "train";
            row.kl_loss = kl;
            row.r_loss = r;
            row.total_loss = total;
            log->push_back(row);
        }
    }
    return vae;
}

std::vector<double> batch_rloss(VaeModel& vae, const Tensor& x) {
    auto [mu, logvar] = encode(vae, x, Mode::infer);
    (void)logvar;
    Tensor x_hat = decode(vae, mu, Mode::infer);
    return per_flow_reconstruction_loss(x, x_hat);
}

double flow_rloss(VaeModel& vae, std::span<const double> x) {
    Tensor xt({1, x.size()}, std::vector<double>(x.begin(), x.end()));
    return batch_rloss(vae, xt)[0];
}

LbdDetector lbd_stage2_train(const Dataset& mixed, VaeModel& frozen_vae, const Preset& preset,
                             RngStream rng, const TrainOptions& options,
                             std::vector<TrainLogRow>* log) {
    if (mixed.empty()) throw DataError("lbd_stage2_train: empty dataset");
    const std::uint64_t checksum_before = weights_checksum(frozen_vae);

    // The VAE is a frozen feature extractor here: compute every flow's
    // scalar reconstruction loss once, up front.
    const int benign = mixed.schema().benign_class();
    const std::size_t n = mixed.size();
    std::vector<double> r_values(n);
    std::vector<int> y(n);
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
        const std::size_t take = std::min(options.batch_size, n - start);
        rows.resize(take);
        for (std::size_t i = 0; i < take; ++i) rows[i] = start + i;
        Tensor x = mixed.gather(rows);
        const std::vector<double> r = batch_rloss(frozen_vae, x);
        for (std::size_t i = 0; i < take; ++i) {
            r_values[start + i] = r[i];
            y[start + i] = mixed.label(start + i) == benign ? 0 : 1;
        }
    }

    LbdDetector det;
    OptimHyper hyper;
    hyper.learning_rate = options.learning_rate.value_or(preset.learning_rate);
    AdamState opt_state;
    Tensor w = Tensor::scalar(0.0);
    Tensor b = Tensor::scalar(0.0);
    ParamSet params{{"lbd.w", &w, false}, {"lbd.b", &b, false}};

    const long steps = options.steps2.value_or(options.steps.value_or(preset.steps2));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RngStream shuffle_rng = rng.fork(2);
    std::size_t cursor = n;  // trigger shuffle on first step
    std::size_t epoch = 0;

    for (long step = 1; step <= steps; ++step) {
        if (cursor >= n) {
            RngStream epoch_rng = shuffle_rng.fork(epoch++);
            epoch_rng.shuffle(order);
            cursor = 0;
        }
        const std::size_t take = std::min(options.batch_size, n - cursor);
        double dw = 0.0, db = 0.0, loss = 0.0;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t idx = order[cursor + i];
            const double pre = w[0] * r_values[idx] + b[0];
            const double target = static_cast<double>(y[idx]);
            // Numerically stable sigmoid cross-entropy.
            loss += std::max(pre, 0.0) - pre * target + std::log1p(std::exp(-std::abs(pre)));
            const double sig = 1.0 / (1.0 + std::exp(-pre));
            const double d = sig - target;
            dw += d * r_values[idx];
            db += d;
            if ((sig >= 0.5 ? 1 : 0) == y[idx]) hits++;
        }
        cursor += take;
        const double inv = 1.0 / static_cast<double>(take);
        loss *= inv;
        if (!std::isfinite(loss)) {
            throw DivergedError("lbd_stage2_train: non-finite loss at step " +
                                std::to_string(step));
        }
        GradStore grads;
        grads.ensure("lbd.w", {1})[0] = dw * inv;
        grads.ensure("lbd.b", {1})[0] = db * inv;
        adam_step(params, grads, opt_state, hyper);

        if (log && options.log_interval > 0 && step % options.log_interval == 0) {
            TrainLogRow row;
            row.step = step;
            row.split = "train";
            row.accuracy = static_cast<double>(hits) / static_cast<double>(take);
            row.p_loss = loss;
            row.total_loss = loss;
            log->push_back(row);
        }
    }
    det.weight = w[0];
    det.bias = b[0];

    if (weights_checksum(frozen_vae) != checksum_before) {
        throw IsolationError("lbd_stage2_train: frozen VAE weights changed during stage 2");
    }
    return det;
}

std::pair<bool, double> lbd_classify(const LbdDetector& det, VaeModel& vae,
                                     std::span<const double> x) {
    const double r = flow_rloss(vae, x);
    const double score = 1.0 / (1.0 + std::exp(-(det.weight * r + det.bias)));
    return {score >= 0.5, score};
}

double benign_probability(TrainedModel& model, std::span<const double> x) {
    if (model.is_lbd) {
        auto [malicious, score] = lbd_classify(model.lbd, model.vae, x);
        (void)malicious;
        return 1.0 - score;
    }
    auto [cls, probs] = llc_predict(model, x);
    (void)cls;
    const int benign = model.preset.classification == ClassMode::binary
                           ? 0
                           : model.schema.benign_class();
    return probs[static_cast<std::size_t>(benign)];
}

std::vector<int> predict_dataset(TrainedModel& model, const Dataset& scaled) {
    const std::size_t n = scaled.size();
    std::vector<int> preds(n);
    std::vector<std::size_t> rows;
    const std::size_t chunk = 1024;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t take = std::min(chunk, n - start);
        rows.resize(take);
        for (std::size_t i = 0; i < take; ++i) rows[i] = start + i;
        Tensor x = scaled.gather(rows);
        if (model.is_lbd) {
            const std::vector<double> r = batch_rloss(model.vae, x);
            for (std::size_t i = 0; i < take; ++i) {
                const double score =
                    1.0 / (1.0 + std::exp(-(model.lbd.weight * r[i] + model.lbd.bias)));
                preds[start + i] = score >= 0.5 ? 1 : 0;
            }
        } else {
            const std::vector<int> p = llc_predict_batch(model, x);
            for (std::size_t i = 0; i < take; ++i) preds[start + i] = p[i];
        }
    }
    return preds;
}

ConfusionMatrix evaluate_model(TrainedModel& model, const Dataset& raw) {
    if (raw.width() != model.schema.width()) {
        throw SchemaError("evaluate_model: dataset width does not match the model schema");
    }
    const Dataset scaled = apply_scaling(raw, model.scaling);
    const std::vector<int> preds = predict_dataset(model, scaled);
    std::vector<int> labels(raw.size());
    for (std::size_t r = 0; r < raw.size(); ++r) {
        labels[r] = effective_label(model.preset, raw.schema(), raw.label(r));
    }
    const std::size_t classes = effective_classes(model.preset, raw.schema());
    return confusion_matrix(preds, labels, classes,
                            effective_class_names(model.preset, raw.schema()));
}

}  // namespace flowvae
