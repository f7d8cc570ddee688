#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowvae/flow_data.hpp"
#include "flowvae/rng.hpp"
#include "flowvae/tensor.hpp"

namespace flowvae {

/// C x C counts; rows are true classes, columns predictions.
struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::vector<std::size_t>> counts;

    std::size_t classes() const { return counts.size(); }
    std::size_t total() const;
    std::size_t row_sum(std::size_t i) const;
    std::size_t trace() const;

    /// CSV with class names on both axes; rates variant normalizes each row
    /// (empty cells for classes absent from the data).
    std::string to_csv(bool rates) const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels,
                                 std::size_t num_classes,
                                 std::vector<std::string> class_names = {});

struct AccuracyReport {
    std::vector<std::optional<double>> per_class;  // absent when the class has no rows
    double overall = 0.0;                          // trace / total
};

AccuracyReport per_class_accuracy(const ConfusionMatrix& cm);

/// Merges every non-benign class into a single "malicious" class.
ConfusionMatrix binary_collapse(const ConfusionMatrix& cm, std::size_t benign_index);

/// One per-interval training measurement; fields that are not part of a
/// run's objective stay absent and serialize as empty CSV cells.
struct TrainLogRow {
    long step = 0;
    std::string split = "train";  // train | val | test
    std::optional<double> accuracy, p_loss, kl_loss, r_loss, total_loss;

    bool operator==(const TrainLogRow&) const = default;
};

/// CSV schema: step,split,accuracy,p_loss,kl_loss,r_loss,total_loss.
/// Rows must be step-sorted; finite values round-trip losslessly.
void write_log(const std::vector<TrainLogRow>& rows, const std::string& path);
std::vector<TrainLogRow> read_log(const std::string& path);

struct ImportanceReport {
    std::vector<std::string> feature_names;
    std::vector<double> accuracy_drop;     // per feature, mean over repeats
    std::vector<std::size_t> rank_order;   // feature indices, largest drop first
    double baseline_accuracy = 0.0;
    std::string to_csv() const;
};

/// Permutation importance: per feature, shuffle the column (seeded), measure
/// the mean accuracy drop of `predict` over `repeats` shuffles.
/// `predict` maps a dataset to predicted class indices.
ImportanceReport permutation_importance(
    const std::function<std::vector<int>(const Dataset&)>& predict, const Dataset& ds,
    RngStream& rng, std::size_t repeats);

struct ThroughputReport {
    double ms_per_batch_mean = 0.0;
    double ms_per_batch_std = 0.0;
    double flows_per_sec = 0.0;
    std::size_t batch_rows = 0;
    std::size_t iterations = 0;
    std::string summary() const;
};

/// Wall-clock statistics of inference-only forward passes over `batch`.
/// Warm-up iterations are excluded; flows_per_sec = rows * 1000 / mean_ms.
ThroughputReport throughput_bench(const std::function<void(const Tensor&)>& forward,
                                  const Tensor& batch, std::size_t iterations);

}  // namespace flowvae
