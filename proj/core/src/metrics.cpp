#include "flowvae/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "flowvae/errors.hpp"

namespace flowvae {

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_optional_double(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    double v = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw DataError("bad numeric cell in log: '" + cell + "'");
    }
    return v;
}

}  // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
        for (std::size_t c : row) n += c;
    }
    return n;
}

std::size_t ConfusionMatrix::row_sum(std::size_t i) const {
    return std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) n += counts[i][i];
    return n;
}

std::string ConfusionMatrix::to_csv(bool rates) const {
    std::ostringstream os;
    os << "true\\pred";
    for (const auto& name : class_names) os << ',' << name;
    os << '\n';
    for (std::size_t i = 0; i < counts.size(); ++i) {
        os << class_names[i];
        const std::size_t rs = row_sum(i);
        for (std::size_t j = 0; j < counts[i].size(); ++j) {
            os << ',';
            if (rates) {
                if (rs > 0) {
                    os << format_double(static_cast<double>(counts[i][j]) /
                                        static_cast<double>(rs));
                }
            } else {
                os << counts[i][j];
            }
        }
        os << '\n';
    }
    return os.str();
}

ConfusionMatrix confusion_matrix(const std::vector<int>& preds, const std::vector<int>& labels,
                                 std::size_t num_classes, std::vector<std::string> class_names) {
    if (preds.size() != labels.size()) {
        throw ArgumentError("confusion_matrix: preds/labels length mismatch");
    }
    ConfusionMatrix cm;
    if (class_names.empty()) {
        for (std::size_t i = 0; i < num_classes; ++i) {
            class_names.push_back("class-" + std::to_string(i));
        }
    }
    if (class_names.size() != num_classes) {
        throw ArgumentError("confusion_matrix: class name count mismatch");
    }
    cm.class_names = std::move(class_names);
    cm.counts.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int t = labels[i];
        const int p = preds[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
            static_cast<std::size_t>(p) >= num_classes) {
            throw ArgumentError("confusion_matrix: class index out of range");
        }
        cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]++;
    }
    return cm;
}

AccuracyReport per_class_accuracy(const ConfusionMatrix& cm) {
    AccuracyReport report;
    report.per_class.resize(cm.classes());
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        const std::size_t rs = cm.row_sum(i);
        if (rs > 0) {
            report.per_class[i] = static_cast<double>(cm.counts[i][i]) / static_cast<double>(rs);
        }
    }
    const std::size_t total = cm.total();
    report.overall = total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(total) : 0.0;
    return report;
}

ConfusionMatrix binary_collapse(const ConfusionMatrix& cm, std::size_t benign_index) {
    if (benign_index >= cm.classes()) {
        throw ArgumentError("binary_collapse: benign index out of range");
    }
    ConfusionMatrix out;
    out.class_names = {"Benign", "Malicious"};
    out.counts.assign(2, std::vector<std::size_t>(2, 0));
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        for (std::size_t j = 0; j < cm.classes(); ++j) {
            const std::size_t bi = i == benign_index ? 0 : 1;
            const std::size_t bj = j == benign_index ? 0 : 1;
            out.counts[bi][bj] += cm.counts[i][j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training log CSV

void write_log(const std::vector<TrainLogRow>& rows, const std::string& path) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].step < rows[i - 1].step) {
            throw ArgumentError("write_log: rows must be step-sorted");
        }
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "step,split,accuracy,p_loss,kl_loss,r_loss,total_loss\n";
    for (const auto& r : rows) {
        out << r.step << ',' << r.split;
        for (const auto& field : {r.accuracy, r.p_loss, r.kl_loss, r.r_loss, r.total_loss}) {
            out << ',';
            if (field) out << format_double(*field);
        }
        out << '\n';
    }
}

std::vector<TrainLogRow> read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty log file: " + path);
    std::vector<TrainLogRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        cells.push_back(cur);
        if (cells.size() != 7) throw DataError("bad log row: '" + line + "'");
        TrainLogRow r;
        r.step = std::stol(cells[0]);
        r.split = cells[1];
        r.accuracy = parse_optional_double(cells[2]);
        r.p_loss = parse_optional_double(cells[3]);
        r.kl_loss = parse_optional_double(cells[4]);
        r.r_loss = parse_optional_double(cells[5]);
        r.total_loss = parse_optional_double(cells[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Permutation importance

std::string ImportanceReport::to_csv() const {
    std::ostringstream os;
    os << "rank,feature,accuracy_drop\n";
    for (std::size_t r = 0; r < rank_order.size(); ++r) {
        const std::size_t f = rank_order[r];
        os << (r + 1) << ',' << feature_names[f] << ',' << format_double(accuracy_drop[f])
           << '\n';
    }
    return os.str();
}

namespace {

double prediction_accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) hits++;
    }
    return preds.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace

ImportanceReport permutation_importance(
    const std::function<std::vector<int>(const Dataset&)>& predict, const Dataset& ds,
    RngStream& rng, std::size_t repeats) {
    if (ds.empty()) throw DataError("permutation_importance: empty dataset");
    if (repeats < 1) throw ArgumentError("permutation_importance: at least 1 repeat required");

    ImportanceReport report;
    report.feature_names = ds.schema().feature_names;
    report.baseline_accuracy = prediction_accuracy(predict(ds), ds.labels());
    report.accuracy_drop.assign(ds.width(), 0.0);

    for (std::size_t f = 0; f < ds.width(); ++f) {
        double drop_sum = 0.0;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            Dataset shuffled = ds;
            rng.shuffle(shuffled.column(f));
            const double acc = prediction_accuracy(predict(shuffled), ds.labels());
            drop_sum += report.baseline_accuracy - acc;
        }
        report.accuracy_drop[f] = drop_sum / static_cast<double>(repeats);
    }

    report.rank_order.resize(ds.width());
    std::iota(report.rank_order.begin(), report.rank_order.end(), std::size_t{0});
    std::stable_sort(report.rank_order.begin(), report.rank_order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return report.accuracy_drop[a] > report.accuracy_drop[b];
                     });
    return report;
}

// ---------------------------------------------------------------------------
// Throughput

std::string ThroughputReport::summary() const {
    std::ostringstream os;
    os << "batch of " << batch_rows << " flows: " << ms_per_batch_mean << " ms/batch (+- "
       << ms_per_batch_std << " ms over " << iterations << " iterations), " << flows_per_sec
       << " flows/s";
    return os.str();
}

ThroughputReport throughput_bench(const std::function<void(const Tensor&)>& forward,
                                  const Tensor& batch, std::size_t iterations) {
    if (iterations < 10) throw ArgumentError("throughput_bench: at least 10 iterations required");
    const std::size_t warmup = std::max<std::size_t>(3, iterations / 10);
    for (std::size_t i = 0; i < warmup; ++i) forward(batch);

    std::vector<double> samples;
    samples.reserve(iterations);
    for (std::size_t i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        forward(batch);
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    var /= static_cast<double>(samples.size());

    ThroughputReport report;
    report.ms_per_batch_mean = mean;
    report.ms_per_batch_std = std::sqrt(var);
    report.batch_rows = batch.extent(0);
    report.iterations = iterations;
    report.flows_per_sec = static_cast<double>(report.batch_rows) * 1000.0 / mean;
    return report;
}

}  // namespace flowvae
