// flowvae: train, evaluate, and benchmark VAE-based DoS/DDoS flow detectors,
// generate synthetic flow data, rank features, and simulate a blacklist +
// partial-admission mitigation gate.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "flowvae/checkpoint.hpp"
#include "flowvae/classifiers.hpp"
#include "flowvae/errors.hpp"
#include "flowvae/gate.hpp"
#include "flowvae/metrics.hpp"

namespace fs = std::filesystem;
using namespace flowvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

struct CommonOpts {
    std::string preset_name;
    std::string train_csv, val_csv, test_csv, data_csv;
    std::string synthetic;  // "demo" for the built-in spec
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = ".";
    std::size_t batch_size = 1024;
    long log_interval = 50;
    std::optional<long> steps, steps1, steps2;
    std::optional<double> lr;
    bool balance = true;
    double split_fraction = 0.6;
    std::size_t synth_per_class = 2000;
    double synth_separation = 6.0;
};

void require_seed(const CommonOpts& o) {
    if (!o.seed_set) {
        throw ConfigError("a seed is required (--seed or FLOWVAE_SEED)");
    }
}

void require_one_source(const CommonOpts& o) {
    const bool have_files = !o.train_csv.empty() || !o.data_csv.empty();
    const bool have_synth = !o.synthetic.empty();
    if (have_files == have_synth) {
        throw ConfigError("exactly one data source required: CSV paths or --synthetic");
    }
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

std::vector<std::string> preset_feature_list(const Preset& preset) {
    if (preset.features == FeatureSet::top40) return cicids_top40_features();
    return cicids_schema().feature_names;
}

// Built-in synthetic source sized for the preset: binary presets get two
// clusters, multi-class presets one cluster per traffic class.
Dataset demo_dataset(const Preset& preset, const CommonOpts& o) {
    const std::size_t classes =
        preset.classification == ClassMode::binary ? 2 : cicids_schema().class_names.size();
    SyntheticSpec spec = synthetic_demo_spec(preset.input_width(), classes, o.synth_per_class,
                                             o.synth_separation, o.seed);
    RngStream rng = RngStream(o.seed).fork(100);
    return gen_synthetic(spec, rng);
}

struct PreparedData {
    Dataset train;      // scaled + balanced
    Dataset val;        // scaled
    Dataset raw_val;    // feature-selected, unscaled (for final evaluation)
    ScalingSpec scaling;
};

PreparedData prepare_training_data(const Preset& preset, const CommonOpts& o) {
    Dataset raw_train, raw_val;
    if (!o.synthetic.empty()) {
        if (o.synthetic != "demo") {
            throw ConfigError("unknown synthetic source '" + o.synthetic + "' (try: demo)");
        }
        Dataset all = demo_dataset(preset, o);
        RngStream split_rng = RngStream(o.seed).fork(101);
        std::tie(raw_train, raw_val) = split_train_val(all, o.split_fraction, split_rng);
    } else {
        const FeatureSchema schema = cicids_schema();
        LoadSummary summary;
        Dataset loaded = load_csv(o.train_csv, schema, &summary);
        std::cout << o.train_csv << ": " << summary.report() << "\n";
        loaded = select_features(loaded, preset_feature_list(preset));
        if (!o.val_csv.empty()) {
            LoadSummary vs;
            raw_val = select_features(load_csv(o.val_csv, schema, &vs), preset_feature_list(preset));
            std::cout << o.val_csv << ": " << vs.report() << "\n";
            raw_train = std::move(loaded);
        } else {
            RngStream split_rng = RngStream(o.seed).fork(101);
            std::string warning;
            std::tie(raw_train, raw_val) =
                split_train_val(loaded, o.split_fraction, split_rng, &warning);
            if (!warning.empty()) std::cout << "split: " << warning << "\n";
        }
    }

    PreparedData data;
    std::optional<Dataset> test;
    if (!o.test_csv.empty() && preset.scaling == ScalingKind::minmax_train_test) {
        LoadSummary ts;
        test = select_features(load_csv(o.test_csv, cicids_schema(), &ts),
                               preset_feature_list(preset));
    }
    data.scaling = fit_scaling(preset.scaling, raw_train, test ? &*test : nullptr);
    Dataset train_scaled = apply_scaling(raw_train, data.scaling);
    data.val = apply_scaling(raw_val, data.scaling);
    data.raw_val = std::move(raw_val);

    if (o.balance) {
        RngStream balance_rng = RngStream(o.seed).fork(102);
        std::string warning;
        data.train = balance_classes(train_scaled, balance_rng, &warning);
        if (!warning.empty()) std::cout << "balance: " << warning << "\n";
    } else {
        data.train = std::move(train_scaled);
    }
    return data;
}

TrainOptions make_train_options(const CommonOpts& o) {
    TrainOptions options;
    options.batch_size = o.batch_size;
    options.log_interval = o.log_interval;
    options.steps = o.steps;
    options.steps2 = o.steps2;
    options.learning_rate = o.lr;
    return options;
}

void write_confusions(const std::string& out_dir, const std::string& tag,
                      const ConfusionMatrix& cm, int benign_index) {
    write_text(out_dir + "/confusion_" + tag + "_counts.csv", cm.to_csv(false));
    write_text(out_dir + "/confusion_" + tag + "_rates.csv", cm.to_csv(true));
    if (cm.classes() > 2) {
        const ConfusionMatrix binary = binary_collapse(cm, static_cast<std::size_t>(benign_index));
        write_text(out_dir + "/confusion_" + tag + "_binary_counts.csv", binary.to_csv(false));
        write_text(out_dir + "/confusion_" + tag + "_binary_rates.csv", binary.to_csv(true));
    }
}

void print_accuracies(const ConfusionMatrix& cm) {
    const AccuracyReport acc = per_class_accuracy(cm);
    std::cout << "overall accuracy: " << acc.overall << "\n";
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        std::cout << "  " << cm.class_names[i] << ": ";
        if (acc.per_class[i]) {
            std::cout << *acc.per_class[i];
        } else {
            std::cout << "(no samples)";
        }
        std::cout << "\n";
    }
}

int cmd_train_llc(const CommonOpts& o) {
    require_seed(o);
    require_one_source(o);
    const Preset& preset = find_preset(o.preset_name);
    if (preset.lbd) throw ConfigError("preset '" + preset.name + "' is an LBD preset; use train-lbd");
    ensure_out_dir(o.out_dir);

    PreparedData data = prepare_training_data(preset, o);
    LlcTrainResult result =
        train_llc(data.train, data.val, preset, RngStream(o.seed), make_train_options(o));
    result.model.scaling = data.scaling;

    save_checkpoint(result.model, o.out_dir + "/checkpoint.fvae");
    write_log(result.log, o.out_dir + "/trainlog.csv");

    const ConfusionMatrix cm = evaluate_model(result.model, data.raw_val);
    write_confusions(o.out_dir, "val", cm, data.raw_val.schema().benign_class());
    std::cout << "trained preset " << preset.name << " for "
              << o.steps.value_or(preset.steps) << " steps\n";
    print_accuracies(cm);
    std::cout << "artifacts in " << o.out_dir << "\n";
    return kExitOk;
}

int cmd_train_lbd(const CommonOpts& o) {
    require_seed(o);
    require_one_source(o);
    const Preset& preset = find_preset(o.preset_name);
    if (!preset.lbd) throw ConfigError("preset '" + preset.name + "' is not an LBD preset");
    ensure_out_dir(o.out_dir);

    PreparedData data = prepare_training_data(preset, o);

    // Stage 1 trains on benign flows only.
    const int benign = data.train.schema().benign_class();
    std::vector<std::size_t> benign_rows;
    for (std::size_t r = 0; r < data.train.size(); ++r) {
        if (data.train.label(r) == benign) benign_rows.push_back(r);
    }
    if (benign_rows.empty()) throw DataError("train-lbd: no benign rows for stage 1");
    Dataset stage1_data = data.train.with_rows(benign_rows);

    TrainOptions options = make_train_options(o);
    TrainOptions stage1_options = options;
    stage1_options.steps = o.steps1 ? o.steps1 : o.steps;

    std::vector<TrainLogRow> log1, log2;
    VaeModel vae = lbd_stage1_train(stage1_data, preset, RngStream(o.seed).fork(10),
                                    stage1_options, &log1);
    const long s1 = stage1_options.steps.value_or(preset.steps1);
    std::cout << "stage 1 done (" << s1 << " steps, " << stage1_data.size()
              << " benign flows)\n";

    LbdDetector det =
        lbd_stage2_train(data.train, vae, preset, RngStream(o.seed).fork(11), options, &log2);
    std::cout << "stage 2 done (" << options.steps2.value_or(preset.steps2)
              << " steps); detector w=" << det.weight << " b=" << det.bias << "\n";

    TrainedModel model;
    model.preset = preset;
    model.vae = std::move(vae);
    model.is_lbd = true;
    model.lbd = det;
    model.schema = data.train.schema();
    model.scaling = data.scaling;
    save_checkpoint(model, o.out_dir + "/checkpoint.fvae");
    write_log(log1, o.out_dir + "/trainlog_stage1.csv");
    write_log(log2, o.out_dir + "/trainlog_stage2.csv");

    const ConfusionMatrix cm = evaluate_model(model, data.raw_val);
    write_confusions(o.out_dir, "val", cm, benign);
    print_accuracies(cm);
    std::cout << "artifacts in " << o.out_dir << "\n";
    return kExitOk;
}

Dataset load_eval_data(const TrainedModel& model, const CommonOpts& o) {
    if (!o.synthetic.empty()) {
        if (o.synthetic != "demo") {
            throw ConfigError("unknown synthetic source '" + o.synthetic + "'");
        }
        return demo_dataset(model.preset, o);
    }
    // Loading with the checkpoint's own schema surfaces any feature the CSV
    // is missing by name.
    LoadSummary summary;
    Dataset ds = load_csv(o.data_csv, model.schema, &summary);
    std::cout << o.data_csv << ": " << summary.report() << "\n";
    return ds;
}

int cmd_evaluate(const CommonOpts& o, const std::string& checkpoint) {
    require_seed(o);
    require_one_source(o);
    TrainedModel model = load_checkpoint(checkpoint);
    Dataset data = load_eval_data(model, o);
    ensure_out_dir(o.out_dir);
    const ConfusionMatrix cm = evaluate_model(model, data);
    write_confusions(o.out_dir, "eval", cm, data.schema().benign_class());
    print_accuracies(cm);
    return kExitOk;
}

int cmd_bench(const CommonOpts& o, const std::string& checkpoint, std::size_t rows,
              std::size_t iterations) {
    require_seed(o);
    TrainedModel model;
    if (!checkpoint.empty()) {
        model = load_checkpoint(checkpoint);
    } else {
        const Preset& preset = find_preset(o.preset_name.empty() ? "4b" : o.preset_name);
        model.preset = preset;
        RngStream rng(o.seed);
        model.vae = build_vae(preset, preset.input_width(), rng);
        if (preset.lbd) {
            model.is_lbd = true;
        } else {
            const std::size_t classes = preset.classification == ClassMode::binary ? 2 : 8;
            model.llc.num_classes = classes;
            model.llc.fc = DenseLayer(model.vae.latent_dim, classes, Activation::linear);
            model.llc.fc.set_name("head");
            model.llc.fc.init_params(rng);
        }
    }
    Tensor batch({rows, model.vae.input_width});
    RngStream rng(o.seed + 1);
    rng.fill_normal(batch);

    auto forward = [&](const Tensor& x) {
        if (model.is_lbd) {
            batch_rloss(model.vae, x);
        } else {
            llc_predict_batch(model, x);
        }
    };
    const ThroughputReport report = throughput_bench(forward, batch, iterations);
    std::cout << report.summary() << "\n";
    return kExitOk;
}

int cmd_gate_sim(const CommonOpts& o, const std::string& checkpoint, double theta,
                 std::size_t capacity, std::size_t window) {
    require_seed(o);
    require_one_source(o);
    TrainedModel model = load_checkpoint(checkpoint);
    Dataset data = load_eval_data(model, o);
    // Stream in a seeded shuffled order so classes interleave like traffic.
    RngStream shuffle = RngStream(o.seed).fork(7);
    Dataset trace = shuffle_rows(data, shuffle);
    ensure_out_dir(o.out_dir);

    GateState state;
    state.admit_threshold = theta;
    state.window_capacity = capacity == 0 ? SIZE_MAX : capacity;
    state.window_size = window;

    auto classify = [&](const FlowRecord& flow) {
        const std::vector<double> scaled = apply_scaling_row(model.scaling, flow.features);
        const double prob_benign = benign_probability(model, scaled);
        bool malicious;
        if (model.is_lbd) {
            malicious = prob_benign < 0.5;
        } else {
            auto [cls, probs] = llc_predict(model, scaled);
            (void)probs;
            const int benign = model.preset.classification == ClassMode::binary
                                   ? 0
                                   : model.schema.benign_class();
            malicious = cls != benign;
        }
        return std::pair<bool, double>{malicious, prob_benign};
    };

    const GateReport report = run_gate_sim(trace, classify, state);
    std::cout << report.text();
    write_text(o.out_dir + "/gate_report.txt", report.text());
    write_text(o.out_dir + "/gate_reasons.csv", report.reason_csv());
    return kExitOk;
}

int cmd_importance(const CommonOpts& o, const std::string& checkpoint, std::size_t repeats) {
    require_seed(o);
    require_one_source(o);
    TrainedModel model = load_checkpoint(checkpoint);
    Dataset data = load_eval_data(model, o);
    ensure_out_dir(o.out_dir);

    // Elementwise scaling commutes with column permutation, so importance
    // can run on the scaled dataset directly.
    Dataset scaled = apply_scaling(data, model.scaling);
    auto predict = [&](const Dataset& ds) { return predict_dataset(model, ds); };

    // Binary-mode models predict over collapsed labels; fold the truth the
    // same way before scoring accuracy drops.
    Dataset relabeled = scaled;
    if (model.preset.classification == ClassMode::binary) {
        FeatureSchema folded_schema = scaled.schema();
        folded_schema.class_names = {"Benign", "Malicious"};
        Dataset rebuilt(folded_schema);
        for (std::size_t r = 0; r < scaled.size(); ++r) {
            rebuilt.append_row(scaled.row(r),
                               effective_label(model.preset, scaled.schema(), scaled.label(r)),
                               scaled.src_ip(r), scaled.dst_ip(r));
        }
        relabeled = std::move(rebuilt);
    }

    RngStream rng = RngStream(o.seed).fork(8);
    const ImportanceReport report = permutation_importance(predict, relabeled, rng, repeats);
    write_text(o.out_dir + "/importance.csv", report.to_csv());
    std::cout << "baseline accuracy " << report.baseline_accuracy << "; top feature: "
              << report.feature_names[report.rank_order.front()] << "\n";
    std::cout << "report in " << o.out_dir << "/importance.csv\n";
    return kExitOk;
}

int cmd_gen_synth(const CommonOpts& o, const std::string& out_file, std::size_t width,
                  std::size_t classes) {
    require_seed(o);
    SyntheticSpec spec =
        synthetic_demo_spec(width, classes, o.synth_per_class, o.synth_separation, o.seed);
    RngStream rng = RngStream(o.seed).fork(100);
    Dataset ds = gen_synthetic(spec, rng);
    save_csv(ds, out_file);
    std::cout << "wrote " << ds.size() << " flows (" << classes << " classes, width " << width
              << ") to " << out_file << "\n";
    return kExitOk;
}

int dispatch(CLI::App& app, const CommonOpts& o, const std::string& checkpoint,
             const std::string& gen_out, std::size_t gen_width, std::size_t gen_classes,
             double theta, std::size_t capacity, std::size_t window, std::size_t bench_rows,
             std::size_t bench_iters, std::size_t repeats) {
    if (app.got_subcommand("presets")) {
        std::cout << preset_registry_listing() << "\n";
        return kExitOk;
    }
    if (app.got_subcommand("train-llc")) return cmd_train_llc(o);
    if (app.got_subcommand("train-lbd")) return cmd_train_lbd(o);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(o, checkpoint);
    if (app.got_subcommand("bench")) return cmd_bench(o, checkpoint, bench_rows, bench_iters);
    if (app.got_subcommand("gate-sim")) return cmd_gate_sim(o, checkpoint, theta, capacity, window);
    if (app.got_subcommand("importance")) return cmd_importance(o, checkpoint, repeats);
    if (app.got_subcommand("gen-synth")) return cmd_gen_synth(o, gen_out, gen_width, gen_classes);
    std::cout << app.help();
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"VAE-based DoS/DDoS flow detection toolkit"};
    app.require_subcommand(0, 1);
    app.set_config("--config", "", "Read options from a key = value file with [sections]");

    bool dump_config = false;
    app.add_flag("--dump-config", dump_config, "Print the effective configuration and exit");

    CommonOpts o;
    std::string checkpoint, gen_out = "synthetic.csv";
    std::size_t gen_width = 40, gen_classes = 2;
    double theta = 0.5;
    std::size_t capacity = 0, window = 0;
    std::size_t bench_rows = 1024, bench_iters = 50;
    std::size_t repeats = 3;

    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "Run seed (or FLOWVAE_SEED)")
            ->envname("FLOWVAE_SEED")
            ->each([&](const std::string&) { o.seed_set = true; });
    };
    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data", o.data_csv, "Input CSV (CICIDS-style, header row)");
        sub->add_option("--synthetic", o.synthetic, "Built-in synthetic source (demo)");
        sub->add_option("--synth-per-class", o.synth_per_class, "Synthetic flows per class");
        sub->add_option("--synth-separation", o.synth_separation,
                        "Synthetic cluster separation in spread units");
        sub->add_option("--out", o.out_dir, "Output directory");
    };
    auto add_train = [&](CLI::App* sub) {
        sub->add_option("--preset", o.preset_name, "Preset name (see `flowvae presets`)")
            ->required();
        sub->add_option("--train", o.train_csv, "Training CSV");
        sub->add_option("--val", o.val_csv, "Validation CSV (default: 60-40 split of --train)");
        sub->add_option("--test", o.test_csv, "Test CSV (used only for minmax-train-test scaling)");
        sub->add_option("--synthetic", o.synthetic, "Built-in synthetic source (demo)");
        sub->add_option("--synth-per-class", o.synth_per_class, "Synthetic flows per class");
        sub->add_option("--synth-separation", o.synth_separation,
                        "Synthetic cluster separation in spread units");
        sub->add_option("--out", o.out_dir, "Output directory");
        sub->add_option("--batch-size", o.batch_size, "Flows per training batch")
            ->capture_default_str();
        sub->add_option("--log-interval", o.log_interval, "Steps between log rows")
            ->capture_default_str();
        sub->add_option("--steps", o.steps, "Override the preset's step count");
        sub->add_option("--steps1", o.steps1, "Override LBD stage-1 steps");
        sub->add_option("--steps2", o.steps2, "Override LBD stage-2 steps");
        sub->add_option("--lr", o.lr, "Override the preset's learning rate");
        sub->add_flag("--balance,!--no-balance", o.balance,
                      "Downsample benign to match malicious before training");
        sub->add_option("--split", o.split_fraction, "Train fraction when splitting one CSV")
            ->capture_default_str();
        add_seed(sub);
    };

    CLI::App* train_llc = app.add_subcommand("train-llc", "Train the latent-layer classifier");
    train_llc->fallthrough();
    add_train(train_llc);
    CLI::App* train_lbd = app.add_subcommand("train-lbd", "Train the two-stage loss-based detector");
    train_lbd->fallthrough();
    add_train(train_lbd);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    evaluate->fallthrough();
    evaluate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    add_data(evaluate);
    add_seed(evaluate);

    CLI::App* bench = app.add_subcommand("bench", "Measure inference throughput");
    bench->fallthrough();
    bench->add_option("--checkpoint", checkpoint, "Model checkpoint (else a fresh --preset model)");
    bench->add_option("--preset", o.preset_name, "Preset for a fresh model");
    bench->add_option("--rows", bench_rows, "Flows per batch")->capture_default_str();
    bench->add_option("--iterations", bench_iters, "Timed iterations")->capture_default_str();
    add_seed(bench);

    CLI::App* gate = app.add_subcommand("gate-sim", "Run the mitigation gate simulation");
    gate->fallthrough();
    gate->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    gate->add_option("--theta", theta, "Benign-probability admission threshold")
        ->capture_default_str();
    gate->add_option("--capacity", capacity, "Admitted flows per window (0 = unbounded)");
    gate->add_option("--window", window, "Processed flows per window (0 = one window)");
    add_data(gate);
    add_seed(gate);

    CLI::App* importance = app.add_subcommand("importance", "Permutation feature importance");
    importance->fallthrough();
    importance->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    importance->add_option("--repeats", repeats, "Shuffles per feature")->capture_default_str();
    add_data(importance);
    add_seed(importance);

    CLI::App* gen = app.add_subcommand("gen-synth", "Generate a synthetic flow CSV");
    gen->fallthrough();
    gen->add_option("--out-file", gen_out, "Output CSV path")->capture_default_str();
    gen->add_option("--width", gen_width, "Feature count")->capture_default_str();
    gen->add_option("--classes", gen_classes, "Class count (benign + attacks)")
        ->capture_default_str();
    gen->add_option("--synth-per-class", o.synth_per_class, "Flows per class")
        ->capture_default_str();
    gen->add_option("--synth-separation", o.synth_separation, "Cluster separation")
        ->capture_default_str();
    add_seed(gen);

    app.add_subcommand("presets", "List the preset registry");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (dump_config) {
            std::cout << app.config_to_str(true, true);
            return kExitOk;
        }
        return dispatch(app, o, checkpoint, gen_out, gen_width, gen_classes, theta, capacity,
                        window, bench_rows, bench_iters, repeats);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergedError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const SchemaError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ContaminationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
