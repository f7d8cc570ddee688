#include "flowvae/flow_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flowvae/errors.hpp"

namespace flowvae {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

std::optional<std::size_t> FeatureSchema::feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i) {
        if (feature_names[i] == name) return i;
    }
    return std::nullopt;
}

std::optional<int> FeatureSchema::class_index(const std::string& label) const {
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        if (class_names[i] == label) return static_cast<int>(i);
    }
    return std::nullopt;
}

int FeatureSchema::benign_class() const {
    for (std::size_t i = 0; i < class_names.size(); ++i) {
        if (class_names[i] == "Benign") return static_cast<int>(i);
    }
    return 0;
}

FeatureSchema cicids_schema() {
    FeatureSchema s;
    // Column order of the harmonized 2017/2018 CSV layout.
    s.feature_names = {
        "Src IP", "Dst IP", "Dst Port", "Protocol", "Flow Duration", "Tot Fwd Pkts",
        "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts", "Fwd Pkt Len Max",
        "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std", "Bwd Pkt Len Max",
        "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std", "Flow IAT Mean",
        "Flow IAT Std", "Flow IAT Max", "Flow IAT Min", "Fwd IAT Tot", "Fwd IAT Mean",
        "Fwd IAT Std", "Fwd IAT Max", "Fwd IAT Min", "Bwd IAT Tot", "Bwd IAT Mean",
        "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min", "Fwd PSH Flags", "Bwd PSH Flags",
        "Fwd URG Flags", "Bwd URG Flags", "Fwd Header Len", "Bwd Header Len", "Pkt Len Min",
        "Pkt Len Max", "Pkt Len Mean", "Pkt Len Std", "Pkt Len Var", "FIN Flag Cnt",
        "SYN Flag Cnt", "RST Flag Cnt", "PSH Flag Cnt", "ACK Flag Cnt", "URG Flag Cnt",
        "CWE Flag Count", "ECE Flag Cnt", "Down/Up Ratio", "Pkt Size Avg", "Fwd Seg Size Avg",
        "Bwd Seg Size Avg", "Fwd Byts/b Avg", "Fwd Pkts/b Avg", "Fwd Blk Rate Avg",
        "Bwd Byts/b Avg", "Bwd Pkts/b Avg", "Bwd Blk Rate Avg", "Subflow Fwd Pkts",
        "Subflow Fwd Byts", "Subflow Bwd Pkts", "Subflow Bwd Byts", "Init Fwd Win Byts",
        "Init Bwd Win Byts", "Fwd Act Data Pkts", "Fwd Seg Size Min", "Active Mean",
        "Active Std", "Active Max", "Active Min", "Idle Mean", "Idle Std", "Idle Max",
        "Idle Min",
    };
    s.label_column = "Label";
    s.class_names = {
        "Benign",        "DoS Slowloris",  "DoS Slowhttptest", "DoS Hulk",
        "DoS Goldeneye", "DDoS LOIC-HTTP", "DDoS LOIC-UDP",    "DDoS HOIC-HTTP",
    };
    s.src_ip_feature = 0;
    s.dst_ip_feature = 1;
    return s;
}

const std::vector<std::string>& cicids_top40_features() {
    // Most to least impactful.
    static const std::vector<std::string> top40 = {
        "Bwd IAT Std",      "Pkt Len Mean",     "Fwd IAT Max",      "Bwd IAT Min",
        "Dst Port",         "Init Bwd Win Byts", "Pkt Size Avg",    "Pkt Len Max",
        "Idle Mean",        "Init Fwd Win Byts", "Bwd Pkt Len Mean", "Bwd Pkt Len Max",
        "Active Min",       "Idle Max",         "Flow Duration",    "Bwd Pkt Len Std",
        "Fwd IAT Std",      "Bwd IAT Mean",     "Pkt Len Var",      "Bwd IAT Max",
        "Fwd Header Len",   "Pkt Len Std",      "Fwd Pkt Len Max",  "TotLen Fwd Pkts",
        "Subflow Fwd Byts", "Flow IAT Min",     "Fwd IAT Mean",     "Flow IAT Mean",
        "Fwd Seg Size Avg", "Fwd IAT Min",      "Fwd IAT Tot",      "Bwd Pkt Len Min",
        "Bwd IAT Tot",      "Flow IAT Max",     "Bwd Header Len",   "Subflow Fwd Pkts",
        "Active Std",       "TotLen Bwd Pkts",  "Idle Min",         "Pkt Len Min",
    };
    return top40;
}

std::vector<std::string> cicids_features_no_ip() {
    std::vector<std::string> out;
    for (const auto& name : cicids_schema().feature_names) {
        if (name == "Src IP" || name == "Dst IP") continue;
        out.push_back(name);
    }
    return out;
}

const std::map<std::string, std::string>& cicids_label_aliases() {
    static const std::map<std::string, std::string> aliases = {
        {"BENIGN", "Benign"},
        {"benign", "Benign"},
        {"DDoS", "DDoS LOIC-HTTP"},  // the 2017 LOIC flood is labeled plain "DDoS"
        {"DDoS attacks-LOIC-HTTP", "DDoS LOIC-HTTP"},
        {"DDOS attack-LOIC-UDP", "DDoS LOIC-UDP"},
        {"DDOS attack-HOIC", "DDoS HOIC-HTTP"},
        {"DoS slowloris", "DoS Slowloris"},
        {"DoS Slowloris", "DoS Slowloris"},
        {"DoS GoldenEye", "DoS Goldeneye"},
        {"DoS Hulk", "DoS Hulk"},
    };
    return aliases;
}

std::uint32_t parse_ipv4(const std::string& text) {
    unsigned parts[4];
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%u.%u.%u.%u%n", &parts[0], &parts[1], &parts[2], &parts[3],
                    &consumed) == 4 &&
        static_cast<std::size_t>(consumed) == text.size()) {
        for (unsigned p : parts) {
            if (p > 255) throw ArgumentError("bad IPv4 address: " + text);
        }
        return (parts[0] << 24) | (parts[1] << 16) | (parts[2] << 8) | parts[3];
    }
    // Plain integer form.
    char* end = nullptr;
    const unsigned long v = std::strtoul(text.c_str(), &end, 10);
    if (end == text.c_str() || *end != '\0' || v > 0xFFFFFFFFUL) {
        throw ArgumentError("bad IPv4 address: " + text);
    }
    return static_cast<std::uint32_t>(v);
}

std::string format_ipv4(std::uint32_t addr) {
    std::ostringstream os;
    os << ((addr >> 24) & 0xFF) << '.' << ((addr >> 16) & 0xFF) << '.' << ((addr >> 8) & 0xFF)
       << '.' << (addr & 0xFF);
    return os.str();
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(FeatureSchema schema) : schema_(std::move(schema)) {
    columns_.resize(schema_.width());
}

std::optional<std::uint32_t> Dataset::src_ip(std::size_t row) const {
    if (!has_src_) return std::nullopt;
    return src_ips_[row];
}

std::optional<std::uint32_t> Dataset::dst_ip(std::size_t row) const {
    if (!has_dst_) return std::nullopt;
    return dst_ips_[row];
}

void Dataset::append_row(std::span<const double> features, int label,
                         std::optional<std::uint32_t> src, std::optional<std::uint32_t> dst) {
    if (features.size() != schema_.width()) {
        throw DimensionError("append_row: feature length does not match schema width");
    }
    if (label < 0 || static_cast<std::size_t>(label) >= schema_.class_names.size()) {
        throw ArgumentError("append_row: label out of range");
    }
    for (std::size_t f = 0; f < features.size(); ++f) {
        columns_[f].push_back(features[f]);
    }
    labels_.push_back(label);
    // Address tracking is all-or-nothing across rows.
    if (src) {
        if (!has_src_ && labels_.size() > 1) {
            throw ArgumentError("append_row: inconsistent source-address tracking");
        }
        has_src_ = true;
        src_ips_.push_back(*src);
    } else if (has_src_) {
        throw ArgumentError("append_row: missing source address in tracked dataset");
    }
    if (dst) {
        if (!has_dst_ && labels_.size() > 1) {
            throw ArgumentError("append_row: inconsistent destination-address tracking");
        }
        has_dst_ = true;
        dst_ips_.push_back(*dst);
    } else if (has_dst_) {
        throw ArgumentError("append_row: missing destination address in tracked dataset");
    }
}

FlowRecord Dataset::record(std::size_t r) const {
    FlowRecord rec;
    rec.features = row(r);
    rec.label = labels_[r];
    rec.src_ip = src_ip(r);
    rec.dst_ip = dst_ip(r);
    return rec;
}

std::vector<double> Dataset::row(std::size_t r) const {
    std::vector<double> out(schema_.width());
    for (std::size_t f = 0; f < out.size(); ++f) out[f] = columns_[f][r];
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(schema_.class_names.size(), 0);
    for (int l : labels_) counts[static_cast<std::size_t>(l)]++;
    return counts;
}

Tensor Dataset::gather(const std::vector<std::size_t>& rows) const {
    Tensor t({rows.size(), schema_.width()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double* out = t.data() + i * schema_.width();
        for (std::size_t f = 0; f < schema_.width(); ++f) out[f] = columns_[f][rows[i]];
    }
    return t;
}

Tensor Dataset::as_tensor() const {
    std::vector<std::size_t> rows(size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return gather(rows);
}

Dataset Dataset::with_rows(const std::vector<std::size_t>& rows) const {
    Dataset out(schema_);
    out.has_src_ = has_src_;
    out.has_dst_ = has_dst_;
    for (std::size_t f = 0; f < columns_.size(); ++f) {
        out.columns_[f].reserve(rows.size());
        for (std::size_t r : rows) out.columns_[f].push_back(columns_[f][r]);
    }
    out.labels_.reserve(rows.size());
    for (std::size_t r : rows) out.labels_.push_back(labels_[r]);
    if (has_src_) {
        out.src_ips_.reserve(rows.size());
        for (std::size_t r : rows) out.src_ips_.push_back(src_ips_[r]);
    }
    if (has_dst_) {
        out.dst_ips_.reserve(rows.size());
        for (std::size_t r : rows) out.dst_ips_.push_back(dst_ips_[r]);
    }
    return out;
}

Dataset Dataset::with_schema(FeatureSchema schema, std::vector<std::vector<double>> columns) const {
    if (schema.width() != columns.size()) {
        throw DimensionError("with_schema: column count does not match schema");
    }
    Dataset out(std::move(schema));
    out.columns_ = std::move(columns);
    out.labels_ = labels_;
    out.src_ips_ = src_ips_;
    out.dst_ips_ = dst_ips_;
    out.has_src_ = has_src_;
    out.has_dst_ = has_dst_;
    return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string LoadSummary::report() const {
    std::ostringstream os;
    os << "loaded " << rows_loaded << " rows, skipped " << rows_skipped;
    if (rows_skipped > 0) {
        os << " (bad numerics " << bad_numeric << ", unknown labels " << unknown_label
           << ", bad field counts " << bad_field_count << ")";
    }
    return os.str();
}

Dataset load_csv(const std::string& path, const FeatureSchema& schema, LoadSummary* summary) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);

    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    const std::size_t ncols = header.size();

    auto column_of = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    };

    std::vector<std::size_t> feature_cols(schema.width());
    std::vector<std::string> missing;
    for (std::size_t f = 0; f < schema.width(); ++f) {
        auto idx = column_of(schema.feature_names[f]);
        if (!idx) {
            missing.push_back(schema.feature_names[f]);
        } else {
            feature_cols[f] = *idx;
        }
    }
    auto label_col = column_of(schema.label_column);
    if (!label_col) missing.push_back(schema.label_column);
    if (!missing.empty()) {
        std::string msg = "missing required columns in " + path + ":";
        for (const auto& m : missing) msg += " '" + m + "'";
        throw SchemaError(msg);
    }

    // Address columns outside the feature schema still feed the per-row
    // metadata (the mitigation gate needs sources even for models trained
    // on IP-free feature sets).
    std::optional<std::size_t> src_meta_col, dst_meta_col;
    if (!schema.src_ip_feature) src_meta_col = column_of("Src IP");
    if (!schema.dst_ip_feature) dst_meta_col = column_of("Dst IP");

    const auto& aliases = cicids_label_aliases();
    Dataset ds(schema);
    LoadSummary local;
    std::vector<double> features(schema.width());

    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != ncols) {
            local.rows_skipped++;
            local.bad_field_count++;
            continue;
        }
        bool ok = true;
        std::optional<std::uint32_t> src, dst;
        for (std::size_t f = 0; f < schema.width() && ok; ++f) {
            const std::string cell = trim(fields[feature_cols[f]]);
            const bool is_ip = (schema.src_ip_feature && *schema.src_ip_feature == f) ||
                               (schema.dst_ip_feature && *schema.dst_ip_feature == f);
            if (is_ip) {
                try {
                    const std::uint32_t addr = parse_ipv4(cell);
                    features[f] = static_cast<double>(addr);
                    if (schema.src_ip_feature && *schema.src_ip_feature == f) src = addr;
                    if (schema.dst_ip_feature && *schema.dst_ip_feature == f) dst = addr;
                } catch (const ArgumentError&) {
                    ok = false;
                }
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
                ok = false;
            } else {
                features[f] = v;
            }
        }
        for (const auto& [col, slot] :
             {std::pair{src_meta_col, &src}, std::pair{dst_meta_col, &dst}}) {
            if (!ok || !col) continue;
            try {
                *slot = parse_ipv4(trim(fields[*col]));
            } catch (const ArgumentError&) {
                ok = false;
            }
        }
        if (!ok) {
            local.rows_skipped++;
            local.bad_numeric++;
            continue;
        }
        std::string label_text = trim(fields[*label_col]);
        auto cls = schema.class_index(label_text);
        if (!cls) {
            auto alias = aliases.find(label_text);
            if (alias != aliases.end()) cls = schema.class_index(alias->second);
        }
        if (!cls) {
            local.rows_skipped++;
            local.unknown_label++;
            continue;
        }
        ds.append_row(features, *cls, src, dst);
        local.rows_loaded++;
    }
    if (summary) *summary = local;
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    const auto& schema = ds.schema();
    // Tracked addresses that are not feature columns are emitted as extra
    // "Src IP"/"Dst IP" columns, mirroring the flow-export layout, so the
    // gate path keeps its sources across a save/load cycle.
    const bool emit_src = !ds.empty() && ds.src_ip(0).has_value() && !schema.src_ip_feature;
    const bool emit_dst = !ds.empty() && ds.dst_ip(0).has_value() && !schema.dst_ip_feature;
    for (std::size_t f = 0; f < schema.width(); ++f) {
        if (f) out << ',';
        out << schema.feature_names[f];
    }
    if (emit_src) out << ",Src IP";
    if (emit_dst) out << ",Dst IP";
    out << ',' << schema.label_column << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t f = 0; f < schema.width(); ++f) {
            if (f) out << ',';
            out << format_double(ds.feature(r, f));
        }
        if (emit_src) out << ',' << format_ipv4(*ds.src_ip(r));
        if (emit_dst) out << ',' << format_ipv4(*ds.dst_ip(r));
        out << ',' << schema.class_names[static_cast<std::size_t>(ds.label(r))] << '\n';
    }
}

// ---------------------------------------------------------------------------
// Scaling

ScalingSpec sample_bounds(const Dataset& ds) {
    if (ds.empty()) throw DataError("sample_bounds: empty dataset");
    ScalingSpec spec;
    spec.kind = ScaleKind::minmax;
    spec.lo.resize(ds.width());
    spec.hi.resize(ds.width());
    for (std::size_t f = 0; f < ds.width(); ++f) {
        const auto& col = ds.column(f);
        double lo = col[0], hi = col[0];
        for (double v : col) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        spec.lo[f] = lo;
        spec.hi[f] = hi;
    }
    return spec;
}

ScalingSpec sample_standard(const Dataset& ds) {
    if (ds.empty()) throw DataError("sample_standard: empty dataset");
    ScalingSpec spec;
    spec.kind = ScaleKind::standard;
    spec.mean.resize(ds.width());
    spec.stddev.resize(ds.width());
    const double n = static_cast<double>(ds.size());
    for (std::size_t f = 0; f < ds.width(); ++f) {
        const auto& col = ds.column(f);
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : col) var += (v - mean) * (v - mean);
        var /= n;
        spec.mean[f] = mean;
        spec.stddev[f] = std::sqrt(var);
    }
    return spec;
}

Dataset scale_minmax(const Dataset& ds, const ScalingSpec& spec) {
    if (spec.kind != ScaleKind::minmax || spec.lo.size() != ds.width()) {
        throw ArgumentError("scale_minmax: spec does not cover every feature");
    }
    Dataset out = ds;
    for (std::size_t f = 0; f < ds.width(); ++f) {
        const double lo = spec.lo[f];
        const double range = spec.hi[f] - lo;
        for (double& v : out.column(f)) {
            if (range <= 0.0) {
                v = 0.0;
                continue;
            }
            const double z = (v - lo) / range;
            v = std::clamp(z, 0.0, 1.0);
        }
    }
    return out;
}

Dataset scale_standard(const Dataset& ds, const ScalingSpec& spec, bool allow_degenerate) {
    if (spec.kind != ScaleKind::standard || spec.mean.size() != ds.width()) {
        throw ArgumentError("scale_standard: spec does not cover every feature");
    }
    Dataset out = ds;
    for (std::size_t f = 0; f < ds.width(); ++f) {
        const double mean = spec.mean[f];
        const double sd = spec.stddev[f];
        if (sd <= 0.0 && !allow_degenerate) {
            throw DataError("scale_standard: zero standard deviation on feature " +
                            ds.schema().feature_names[f]);
        }
        for (double& v : out.column(f)) {
            v = sd > 0.0 ? (v - mean) / sd : 0.0;
        }
    }
    return out;
}

double log_signed_value(double x) {
    return x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
}

Dataset scale_log(const Dataset& ds) {
    Dataset out = ds;
    for (std::size_t f = 0; f < ds.width(); ++f) {
        for (double& v : out.column(f)) v = log_signed_value(v);
    }
    return out;
}

Dataset apply_scaling(const Dataset& ds, const ScalingSpec& spec) {
    switch (spec.kind) {
        case ScaleKind::none: return ds;
        case ScaleKind::minmax: return scale_minmax(ds, spec);
        case ScaleKind::standard: return scale_standard(ds, spec);
        case ScaleKind::log_signed: return scale_log(ds);
    }
    throw ArgumentError("apply_scaling: bad kind");
}

std::vector<double> apply_scaling_row(const ScalingSpec& spec, std::span<const double> features) {
    std::vector<double> out(features.begin(), features.end());
    switch (spec.kind) {
        case ScaleKind::none:
            break;
        case ScaleKind::minmax: {
            if (spec.lo.size() != out.size()) {
                throw ArgumentError("apply_scaling_row: spec width mismatch");
            }
            for (std::size_t f = 0; f < out.size(); ++f) {
                const double range = spec.hi[f] - spec.lo[f];
                out[f] = range <= 0.0 ? 0.0
                                      : std::clamp((out[f] - spec.lo[f]) / range, 0.0, 1.0);
            }
            break;
        }
        case ScaleKind::standard: {
            if (spec.mean.size() != out.size()) {
                throw ArgumentError("apply_scaling_row: spec width mismatch");
            }
            for (std::size_t f = 0; f < out.size(); ++f) {
                out[f] = spec.stddev[f] > 0.0 ? (out[f] - spec.mean[f]) / spec.stddev[f] : 0.0;
            }
            break;
        }
        case ScaleKind::log_signed:
            for (double& v : out) v = log_signed_value(v);
            break;
    }
    return out;
}

ScalingSpec fit_scaling(ScalingKind kind, const Dataset& train, const Dataset* test) {
    switch (kind) {
        case ScalingKind::none:
            return ScalingSpec{};
        case ScalingKind::log_signed: {
            ScalingSpec spec;
            spec.kind = ScaleKind::log_signed;
            return spec;
        }
        case ScalingKind::minmax_train:
            return sample_bounds(train);
        case ScalingKind::minmax_train_test: {
            ScalingSpec spec = sample_bounds(train);
            if (test && !test->empty()) {
                const ScalingSpec t = sample_bounds(*test);
                for (std::size_t f = 0; f < spec.lo.size(); ++f) {
                    spec.lo[f] = std::min(spec.lo[f], t.lo[f]);
                    spec.hi[f] = std::max(spec.hi[f], t.hi[f]);
                }
            }
            return spec;
        }
    }
    throw ArgumentError("fit_scaling: bad kind");
}

// ---------------------------------------------------------------------------
// Feature selection / balancing / splitting

Dataset select_features(const Dataset& ds, const std::vector<std::string>& feature_list) {
    const auto& schema = ds.schema();
    std::vector<std::size_t> indices;
    indices.reserve(feature_list.size());
    for (const auto& name : feature_list) {
        auto idx = schema.feature_index(name);
        if (!idx) throw SchemaError("select_features: unknown feature '" + name + "'");
        indices.push_back(*idx);
    }
    FeatureSchema out_schema;
    out_schema.feature_names = feature_list;
    out_schema.label_column = schema.label_column;
    out_schema.class_names = schema.class_names;
    for (std::size_t i = 0; i < feature_list.size(); ++i) {
        if (schema.src_ip_feature && indices[i] == *schema.src_ip_feature) {
            out_schema.src_ip_feature = i;
        }
        if (schema.dst_ip_feature && indices[i] == *schema.dst_ip_feature) {
            out_schema.dst_ip_feature = i;
        }
    }
    std::vector<std::vector<double>> columns;
    columns.reserve(indices.size());
    for (std::size_t idx : indices) columns.push_back(ds.column(idx));
    return ds.with_schema(std::move(out_schema), std::move(columns));
}

Dataset balance_classes(const Dataset& ds, RngStream& rng, std::string* warning) {
    const int benign = ds.schema().benign_class();
    std::vector<std::size_t> benign_rows, malicious_rows;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        (ds.label(r) == benign ? benign_rows : malicious_rows).push_back(r);
    }
    if (benign_rows.empty()) throw DataError("balance_classes: no benign rows");
    if (malicious_rows.empty()) throw DataError("balance_classes: no malicious rows");

    if (benign_rows.size() <= malicious_rows.size()) {
        if (warning && benign_rows.size() < malicious_rows.size()) {
            *warning = "benign is already the minority (" + std::to_string(benign_rows.size()) +
                       " vs " + std::to_string(malicious_rows.size()) + "); kept whole";
        }
        return ds;
    }
    rng.shuffle(benign_rows);
    benign_rows.resize(malicious_rows.size());
    std::vector<std::size_t> keep = benign_rows;
    keep.insert(keep.end(), malicious_rows.begin(), malicious_rows.end());
    std::sort(keep.begin(), keep.end());
    return ds.with_rows(keep);
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double fraction, RngStream& rng,
                                            std::string* warning) {
    if (fraction <= 0.0 || fraction >= 1.0) {
        throw ArgumentError("split_train_val: fraction must be in (0,1)");
    }
    if (ds.empty()) throw DataError("split_train_val: empty dataset");

    std::vector<std::vector<std::size_t>> per_class(ds.schema().class_names.size());
    for (std::size_t r = 0; r < ds.size(); ++r) {
        per_class[static_cast<std::size_t>(ds.label(r))].push_back(r);
    }
    std::vector<std::size_t> train_rows, val_rows;
    std::size_t tiny_classes = 0;
    for (auto& rows : per_class) {
        if (rows.empty()) continue;
        rng.shuffle(rows);
        std::size_t take = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(rows.size())));
        if (rows.size() < 2) {
            take = rows.size();  // too small to stratify; keep in train
            tiny_classes++;
        }
        take = std::min(take, rows.size());
        train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + take);
        val_rows.insert(val_rows.end(), rows.begin() + take, rows.end());
    }
    if (warning && tiny_classes > 0) {
        *warning = std::to_string(tiny_classes) + " class(es) with a single record went to train";
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    return {ds.with_rows(train_rows), ds.with_rows(val_rows)};
}

Dataset shuffle_rows(const Dataset& ds, RngStream& rng) {
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    return ds.with_rows(order);
}

// ---------------------------------------------------------------------------
// Batching

BatchStream::BatchStream(const Dataset& ds, std::size_t batch_size, RngStream rng)
    : ds_(&ds), batch_size_(batch_size), base_rng_(rng) {
    if (ds.empty()) throw DataError("batches: empty dataset");
    if (batch_size_ < 1) throw ArgumentError("batches: batch size must be >= 1");
    order_.resize(ds.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    reshuffle();
}

void BatchStream::reshuffle() {
    RngStream epoch_rng = base_rng_.fork(epoch_);
    epoch_rng.shuffle(order_);
    cursor_ = 0;
}

Batch BatchStream::next() {
    if (cursor_ >= order_.size()) {
        epoch_++;
        reshuffle();
    }
    const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
    Batch b;
    b.rows.assign(order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    b.x = ds_->gather(b.rows);
    b.labels.reserve(take);
    for (std::size_t r : b.rows) b.labels.push_back(ds_->label(r));
    return b;
}

// ---------------------------------------------------------------------------
// Synthetic flows

Dataset gen_synthetic(const SyntheticSpec& spec, RngStream& rng) {
    if (spec.classes.empty()) throw ArgumentError("gen_synthetic: no classes");
    const std::size_t width = spec.classes.front().mean.size();
    FeatureSchema schema;
    for (std::size_t f = 0; f < width; ++f) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "f%02u", static_cast<unsigned>(f));
        schema.feature_names.emplace_back(buf);
    }
    for (const auto& c : spec.classes) schema.class_names.push_back(c.name);

    Dataset ds(schema);
    std::vector<double> features(width);
    const std::uint32_t victim = parse_ipv4("192.168.0.1");
    for (std::size_t ci = 0; ci < spec.classes.size(); ++ci) {
        const auto& c = spec.classes[ci];
        if (c.count < 1) throw ArgumentError("gen_synthetic: class count must be >= 1");
        if (c.spread <= 0.0) throw ArgumentError("gen_synthetic: spread must be positive");
        if (c.mean.size() != width) throw DimensionError("gen_synthetic: ragged class means");
        if (c.ip_pool < 1) throw ArgumentError("gen_synthetic: ip pool must be >= 1");
        for (std::size_t n = 0; n < c.count; ++n) {
            for (std::size_t f = 0; f < width; ++f) {
                features[f] = c.mean[f] + c.spread * rng.normal();
            }
            const std::uint32_t host = static_cast<std::uint32_t>(rng.uniform_index(c.ip_pool));
            const std::uint32_t src = (10u << 24) | (static_cast<std::uint32_t>(ci) << 16) |
                                      (host + 1);
            ds.append_row(features, static_cast<int>(ci), src, victim);
        }
    }
    return ds;
}

SyntheticSpec synthetic_demo_spec(std::size_t width, std::size_t classes, std::size_t per_class,
                                  double separation, std::uint64_t seed) {
    if (classes < 2) throw ArgumentError("synthetic_demo_spec: need at least 2 classes");
    SyntheticSpec spec;
    spec.seed = seed;
    SyntheticClass benign;
    benign.name = "Benign";
    benign.mean.assign(width, 0.0);
    benign.count = per_class;
    // Benign traffic comes from many sources, attacks from a small pool.
    benign.ip_pool = 256;
    spec.classes.push_back(std::move(benign));

    RngStream dir_rng = RngStream(seed).fork(4242);
    for (std::size_t i = 1; i < classes; ++i) {
        SyntheticClass attack;
        attack.name = classes == 2 ? "Malicious" : "Attack-" + std::to_string(i);
        attack.mean.resize(width);
        double norm = 0.0;
        for (double& m : attack.mean) {
            m = dir_rng.normal();
            norm += m * m;
        }
        norm = std::sqrt(norm);
        for (double& m : attack.mean) m = separation * m / (norm > 0.0 ? norm : 1.0);
        attack.count = per_class;
        spec.classes.push_back(std::move(attack));
    }
    return spec;
}

}  // namespace flowvae
