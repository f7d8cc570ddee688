#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowvae/presets.hpp"
#include "flowvae/rng.hpp"
#include "flowvae/tensor.hpp"

namespace flowvae {

/// Ordered feature columns plus the label column and class registry.
struct FeatureSchema {
    std::vector<std::string> feature_names;
    std::string label_column = "Label";
    std::vector<std::string> class_names;
    std::optional<std::size_t> src_ip_feature;
    std::optional<std::size_t> dst_ip_feature;

    std::size_t width() const { return feature_names.size(); }
    std::optional<std::size_t> feature_index(const std::string& name) const;
    std::optional<int> class_index(const std::string& label) const;

    /// Index of the benign class ("Benign" if present, else 0).
    int benign_class() const;

    bool operator==(const FeatureSchema&) const = default;
};

/// The harmonized 76-column CICIDS layout (Src IP / Dst IP included) with
/// the eight traffic classes of the 2018 capture.
FeatureSchema cicids_schema();

/// The 40 most impactful features, most to least impactful.
const std::vector<std::string>& cicids_top40_features();

/// The 76 features minus the two IP address columns.
std::vector<std::string> cicids_features_no_ip();

/// Label spellings seen in the raw CSVs, mapped onto the class registry
/// (the 2017 capture calls its LOIC flood plain "DDoS", etc.).
const std::map<std::string, std::string>& cicids_label_aliases();

/// One bidirectional traffic flow.
struct FlowRecord {
    std::vector<double> features;
    int label = 0;
    std::optional<std::uint32_t> src_ip;
    std::optional<std::uint32_t> dst_ip;
};

std::uint32_t parse_ipv4(const std::string& text);
std::string format_ipv4(std::uint32_t addr);

/// Typed, column-major collection of flows. Immutable in practice: every
/// transform returns a new dataset, so sharing read-only across threads is
/// safe.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(FeatureSchema schema);

    const FeatureSchema& schema() const { return schema_; }
    std::size_t size() const { return labels_.size(); }
    std::size_t width() const { return schema_.width(); }
    bool empty() const { return labels_.empty(); }

    double feature(std::size_t row, std::size_t col) const { return columns_[col][row]; }
    const std::vector<double>& column(std::size_t col) const { return columns_[col]; }
    std::vector<double>& column(std::size_t col) { return columns_[col]; }
    int label(std::size_t row) const { return labels_[row]; }
    const std::vector<int>& labels() const { return labels_; }

    std::optional<std::uint32_t> src_ip(std::size_t row) const;
    std::optional<std::uint32_t> dst_ip(std::size_t row) const;

    void append_row(std::span<const double> features, int label,
                    std::optional<std::uint32_t> src = std::nullopt,
                    std::optional<std::uint32_t> dst = std::nullopt);

    FlowRecord record(std::size_t row) const;
    std::vector<double> row(std::size_t row) const;

    /// Per-class record counts; always sums to size().
    std::vector<std::size_t> class_counts() const;

    /// [rows.size() x width] tensor of the selected rows.
    Tensor gather(const std::vector<std::size_t>& rows) const;
    Tensor as_tensor() const;

    /// Row subset (in the given order) with the same schema.
    Dataset with_rows(const std::vector<std::size_t>& rows) const;

    /// Same rows with a replacement schema of equal width (used by
    /// feature selection).
    Dataset with_schema(FeatureSchema schema, std::vector<std::vector<double>> columns) const;

private:
    FeatureSchema schema_;
    std::vector<std::vector<double>> columns_;
    std::vector<int> labels_;
    std::vector<std::uint32_t> src_ips_, dst_ips_;
    bool has_src_ = false, has_dst_ = false;
};

struct LoadSummary {
    std::size_t rows_loaded = 0;
    std::size_t rows_skipped = 0;
    std::size_t bad_numeric = 0;
    std::size_t unknown_label = 0;
    std::size_t bad_field_count = 0;
    std::string report() const;
};

/// Header-mapped CSV ingestion: columns are matched by name so column order
/// does not matter; rows with unparseable numerics or unknown labels are
/// skipped and counted. Missing schema column -> SchemaError; empty file ->
/// DataError.
Dataset load_csv(const std::string& path, const FeatureSchema& schema,
                 LoadSummary* summary = nullptr);

void save_csv(const Dataset& ds, const std::string& path);

enum class ScaleKind { none, minmax, standard, log_signed };

struct ScalingSpec {
    ScaleKind kind = ScaleKind::none;
    std::vector<double> lo, hi;        // minmax bounds per feature
    std::vector<double> mean, stddev;  // standard-score stats per feature
};

/// Per-feature min/max sampled from the dataset.
ScalingSpec sample_bounds(const Dataset& ds);

/// Per-feature mean and (population) standard deviation.
ScalingSpec sample_standard(const Dataset& ds);

/// z = (x - min) / (max - min), clamped into [0,1]; a constant feature maps
/// to 0.
Dataset scale_minmax(const Dataset& ds, const ScalingSpec& spec);

/// z = (x - mean) / std. A zero-std feature throws DataError unless
/// allow_degenerate, which maps it to 0.
Dataset scale_standard(const Dataset& ds, const ScalingSpec& spec, bool allow_degenerate = false);

/// Signed shifted log: sign(x) * ln(1 + |x|). Odd and strictly monotone;
/// tolerates the datasets' zero and negative sentinel values.
Dataset scale_log(const Dataset& ds);

double log_signed_value(double x);

Dataset apply_scaling(const Dataset& ds, const ScalingSpec& spec);
std::vector<double> apply_scaling_row(const ScalingSpec& spec, std::span<const double> features);

/// Derives the scaling spec a preset asks for. `test` is only consulted for
/// the minmax-train-test variant.
ScalingSpec fit_scaling(ScalingKind kind, const Dataset& train, const Dataset* test = nullptr);

/// Keeps the listed features (result order = list order).
Dataset select_features(const Dataset& ds, const std::vector<std::string>& feature_list);

/// Downsamples benign rows (seeded, without replacement) until the benign
/// count equals the total malicious count. When benign is already the
/// minority the dataset is returned whole and `warning` is set.
Dataset balance_classes(const Dataset& ds, RngStream& rng, std::string* warning = nullptr);

/// Seeded stratified split; train gets round(fraction * n) of each class.
/// Single-record classes go to train (and set `warning`).
std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double fraction, RngStream& rng,
                                            std::string* warning = nullptr);

Dataset shuffle_rows(const Dataset& ds, RngStream& rng);

struct Batch {
    Tensor x;
    std::vector<int> labels;
    std::vector<std::size_t> rows;
};

/// Seeded batch iterator. Each epoch reshuffles with the epoch index folded
/// into the seed, so orders differ across epochs but are identical across
/// runs. The final short batch of an epoch is emitted.
class BatchStream {
public:
    BatchStream(const Dataset& ds, std::size_t batch_size, RngStream rng);

    Batch next();
    std::size_t epoch() const { return epoch_; }

private:
    void reshuffle();

    const Dataset* ds_;
    std::size_t batch_size_;
    RngStream base_rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
};

struct SyntheticClass {
    std::string name;
    std::vector<double> mean;
    double spread = 1.0;
    std::size_t count = 0;
    std::size_t ip_pool = 8;  // distinct synthetic source addresses
};

struct SyntheticSpec {
    std::vector<SyntheticClass> classes;  // class 0 is benign by convention
    std::uint64_t seed = 0;
};

/// Per class: count records of mean + spread * N(0,1), labels attached,
/// synthetic source/destination addresses assigned from small per-class
/// pools. Deterministic for a given stream.
Dataset gen_synthetic(const SyntheticSpec& spec, RngStream& rng);

/// Benign cluster at the origin plus (classes-1) attack clusters whose means
/// sit `separation` apart in feature space; unit spread.
SyntheticSpec synthetic_demo_spec(std::size_t width, std::size_t classes, std::size_t per_class,
                                  double separation, std::uint64_t seed);

}  // namespace flowvae
