#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowvae/flow_data.hpp"
#include "flowvae/metrics.hpp"
#include "flowvae/presets.hpp"
#include "flowvae/vae.hpp"

namespace flowvae {

/// Softmax classification head on the latent layer.
struct LlcHead {
    DenseLayer fc{0, 0, Activation::linear};  // logits; softmax applied at predict
    std::size_t num_classes = 0;
};

/// 1-D linear classifier over the scalar reconstruction loss. Decision is
/// sigmoid(weight * rloss + bias) >= 0.5 => malicious; larger reconstruction
/// error means a larger malicious score.
struct LbdDetector {
    double weight = 0.0;
    double bias = 0.0;
};

/// A trained detector: VAE, head, and everything inference needs (feature
/// schema and the scaling fitted on the training data). Inference never
/// mutates weights; LLC prediction touches only the encoder and head.
struct TrainedModel {
    Preset preset;
    VaeModel vae;
    bool is_lbd = false;
    LlcHead llc;
    LbdDetector lbd;
    FeatureSchema schema;
    ScalingSpec scaling;
};

/// Mean softmax cross-entropy (the P-Loss). When dlogits is non-null it
/// receives (softmax - one_hot) / B.
double softmax_xent(const Tensor& logits, const std::vector<int>& labels,
                    Tensor* dlogits = nullptr);

/// Total training objective: enabled losses summed, KL scaled by the
/// preset's multiplier. P and R multipliers are fixed at 1.
double total_loss(double p, double r, double kl, const Preset& preset);

/// Classes the preset trains: 2 in binary mode, the schema's class count
/// otherwise. Binary mode folds every non-benign label into 1.
std::size_t effective_classes(const Preset& preset, const FeatureSchema& schema);
int effective_label(const Preset& preset, const FeatureSchema& schema, int label);
std::vector<std::string> effective_class_names(const Preset& preset, const FeatureSchema& schema);

/// Deterministic prediction from mu (no latent noise); ties break to the
/// lowest class index. Input must already be scaled.
std::pair<int, std::vector<double>> llc_predict(TrainedModel& model, std::span<const double> x);
std::vector<int> llc_predict_batch(TrainedModel& model, const Tensor& x, Tensor* probs = nullptr);

struct TrainOptions {
    std::size_t batch_size = 1024;
    long log_interval = 50;
    std::optional<long> steps;    // override the preset's table value
    std::optional<long> steps2;   // LBD stage-2 override
    std::optional<double> learning_rate;
};

struct LlcTrainResult {
    TrainedModel model;
    std::vector<TrainLogRow> log;
};

/// Joint training of VAE + classification head on preset.steps batches.
/// Expects pre-scaled, pre-balanced datasets. Logs a train row (batch
/// means) and a val row (full-split sweep) every log_interval steps.
/// Deterministic for a given rng.
LlcTrainResult train_llc(const Dataset& train, const Dataset& val, const Preset& preset,
                         RngStream rng, const TrainOptions& options = {});

/// LBD stage 1: VAE trained on benign flows only (ContaminationError if any
/// malicious row is present) with loss r + KLM * kl.
VaeModel lbd_stage1_train(const Dataset& benign_only, const Preset& preset, RngStream rng,
                          const TrainOptions& options = {},
                          std::vector<TrainLogRow>* log = nullptr);

/// LBD stage 2: per-flow reconstruction losses are computed through the
/// frozen VAE (noise-free, inference mode), then the detector is fitted by
/// sigmoid cross-entropy. The VAE checksum is verified before and after;
/// a change raises IsolationError.
LbdDetector lbd_stage2_train(const Dataset& mixed, VaeModel& frozen_vae, const Preset& preset,
                             RngStream rng, const TrainOptions& options = {},
                             std::vector<TrainLogRow>* log = nullptr);

/// Noise-free per-flow reconstruction loss of one scaled flow vector.
double flow_rloss(VaeModel& vae, std::span<const double> x);
std::vector<double> batch_rloss(VaeModel& vae, const Tensor& x);

/// (malicious?, score in (0,1)); score >= 0.5 labels malicious.
std::pair<bool, double> lbd_classify(const LbdDetector& det, VaeModel& vae,
                                     std::span<const double> x);

/// P(benign) for a scaled flow under either head.
double benign_probability(TrainedModel& model, std::span<const double> x);

/// Full-dataset evaluation; applies the model's scaling to raw features.
ConfusionMatrix evaluate_model(TrainedModel& model, const Dataset& raw);

/// Adapter for permutation_importance: prediction over an already-scaled
/// dataset.
std::vector<int> predict_dataset(TrainedModel& model, const Dataset& scaled);

}  // namespace flowvae
