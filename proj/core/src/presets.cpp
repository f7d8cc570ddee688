#include "flowvae/presets.hpp"

#include <sstream>

#include "flowvae/errors.hpp"
#include "flowvae/layers.hpp"

namespace flowvae {

std::string scaling_kind_name(ScalingKind k) {
    switch (k) {
        case ScalingKind::none: return "none";
        case ScalingKind::minmax_train: return "minmax-train";
        case ScalingKind::minmax_train_test: return "minmax-train-test";
        case ScalingKind::log_signed: return "log";
    }
    return "?";
}

std::string layer_kind_name(LayerKind k) {
    return k == LayerKind::conv ? "conv" : "dense";
}

std::string class_mode_name(ClassMode m) {
    return m == ClassMode::multiclass ? "multiclass" : "binary";
}

std::string feature_set_name(FeatureSet f) {
    return f == FeatureSet::all76 ? "all76" : "top40";
}

namespace {

std::vector<Preset> build_registry() {
    std::vector<Preset> reg;

    auto llc = [&](std::string name) -> Preset& {
        Preset p;
        p.name = std::move(name);
        reg.push_back(std::move(p));
        return reg.back();
    };

    // Original six presets: kernel 5, stride 2-1-1, all 76 features,
    // multi-class, batch-norm regularization.
    {
        Preset& p = llc("1");
        p.learning_rate = 1e-2;
        p.kl_multiplier = 1.0;
        p.steps = 15000;
        p.scaling = ScalingKind::none;
    }
    {
        Preset& p = llc("2");
        p.learning_rate = 1e-2;
        p.kl_multiplier = 1e-2;
        p.steps = 15000;
        p.scaling = ScalingKind::minmax_train;
    }
    {
        Preset& p = llc("3");
        p.learning_rate = 1e-4;
        p.kl_multiplier = 1e-2;
        p.steps = 30000;
        p.scaling = ScalingKind::minmax_train_test;
    }
    {
        Preset& p = llc("4");
        p.learning_rate = 1e-4;
        p.kl_multiplier = 1e-4;
        p.steps = 30000;
        p.scaling = ScalingKind::log_signed;
    }
    {
        Preset& p = llc("5");
        p.learning_rate = 1e-4;
        p.kl_multiplier = 1e-4;
        p.steps = 30000;
        p.scaling = ScalingKind::log_signed;
        p.layer_type = LayerKind::dense;
    }
    {
        // P-Loss only: a plain reducing conv network, kept for baseline runs.
        Preset& p = llc("6");
        p.learning_rate = 1e-4;
        p.kl_multiplier = std::nullopt;
        p.steps = 30000;
        p.scaling = ScalingKind::log_signed;
        p.loss_r = false;
        p.loss_kl = false;
    }
    {
        // Binary variants on the reduced top-40 feature set, stride 1-1-1.
        Preset& p = llc("4a");
        p.learning_rate = 1e-4;
        p.kl_multiplier = 1e-4;
        p.steps = 30000;
        p.scaling = ScalingKind::log_signed;
        p.kernels = {5, 5, 5};
        p.strides = {1, 1, 1};
        p.features = FeatureSet::top40;
        p.classification = ClassMode::binary;
    }
    {
        Preset& p = llc("4b");
        p.learning_rate = 1e-4;
        p.kl_multiplier = 1e-6;
        p.steps = 50000;
        p.scaling = ScalingKind::log_signed;
        p.kernels = {5, 5, 5};
        p.strides = {1, 1, 1};
        p.features = FeatureSet::top40;
        p.classification = ClassMode::binary;
    }
    {
        Preset& p = llc("4c");
        p.learning_rate = 1e-4;
        p.kl_multiplier = 1e-6;
        p.steps = 140000;
        p.scaling = ScalingKind::log_signed;
        p.kernels = {7, 7, 7};
        p.strides = {2, 2, 1};
        p.features = FeatureSet::top40;
        p.classification = ClassMode::binary;
    }
    {
        Preset& p = llc("6a");
        p.learning_rate = 1e-4;
        p.kl_multiplier = std::nullopt;
        p.steps = 30000;
        p.scaling = ScalingKind::log_signed;
        p.kernels = {5, 5, 5};
        p.strides = {1, 1, 1};
        p.features = FeatureSet::top40;
        p.classification = ClassMode::binary;
        p.loss_r = false;
        p.loss_kl = false;
    }

    auto lbd = [&](std::string name) -> Preset& {
        Preset p;
        p.name = std::move(name);
        p.lbd = true;
        p.learning_rate = 1e-4;
        p.scaling = ScalingKind::log_signed;
        p.classification = ClassMode::binary;
        reg.push_back(std::move(p));
        return reg.back();
    };

    {
        Preset& p = lbd("lbd1");
        p.kl_multiplier = 1.0;
        p.steps1 = 20000;
        p.steps2 = 30000;
        p.features = FeatureSet::all76;
        p.kernels = {5, 5, 5};
        p.strides = {2, 1, 1};
    }
    {
        Preset& p = lbd("lbd2");
        p.kl_multiplier = 4.0;
        p.steps1 = 20000;
        p.steps2 = 30000;
        p.features = FeatureSet::top40;
        p.kernels = {5, 5, 5};
        p.strides = {1, 1, 1};
    }
    {
        Preset& p = lbd("lbd3");
        p.kl_multiplier = 1e-6;
        p.steps1 = 1500;
        p.steps2 = 30000;
        p.features = FeatureSet::top40;
        p.kernels = {5, 5, 5};
        p.strides = {1, 1, 1};
    }
    {
        Preset& p = lbd("lbd4");
        p.kl_multiplier = 1e-6;
        p.steps1 = 100000;
        p.steps2 = 30000;
        p.features = FeatureSet::top40;
        p.kernels = {7, 7, 7};
        p.strides = {2, 2, 1};
    }
    return reg;
}

}  // namespace

const std::vector<Preset>& preset_registry() {
    static const std::vector<Preset> registry = build_registry();
    return registry;
}

const Preset& find_preset(const std::string& name) {
    for (const Preset& p : preset_registry()) {
        if (p.name == name) return p;
    }
    throw ConfigError("unknown preset '" + name + "'\n" + preset_registry_listing());
}

std::string preset_registry_listing() {
    std::ostringstream os;
    os << "registered presets:";
    for (const Preset& p : preset_registry()) {
        os << "\n  " << p.name << (p.lbd ? "  [lbd]" : "") << "  lr=" << p.learning_rate
           << " klm=";
        if (p.kl_multiplier) {
            os << *p.kl_multiplier;
        } else {
            os << "none";
        }
        if (p.lbd) {
            os << " steps1=" << p.steps1 << " steps2=" << p.steps2;
        } else {
            os << " steps=" << p.steps;
        }
        os << " st=" << scaling_kind_name(p.scaling) << " lt=" << layer_kind_name(p.layer_type)
           << " ks=" << p.kernels[0] << " stride=" << p.strides[0] << "-" << p.strides[1] << "-"
           << p.strides[2] << " features=" << feature_set_name(p.features) << " ct="
           << class_mode_name(p.classification);
    }
    return os.str();
}

std::vector<std::size_t> preset_shape_chain(const Preset& preset, std::size_t input_width) {
    std::vector<std::size_t> chain{input_width};
    for (std::size_t i = 0; i < 3; ++i) {
        const Padding pad = preset.strides[i] > 1 ? Padding::half : Padding::valid;
        chain.push_back(conv1d_output_len(chain.back(), preset.kernels[i], preset.strides[i], pad));
    }
    return chain;
}

}  // namespace flowvae
