#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace flowvae {

enum class ScalingKind { none, minmax_train, minmax_train_test, log_signed };
enum class LayerKind { conv, dense };
enum class ClassMode { multiclass, binary };
enum class FeatureSet { all76, top40 };

std::string scaling_kind_name(ScalingKind k);
std::string layer_kind_name(LayerKind k);
std::string class_mode_name(ClassMode m);
std::string feature_set_name(FeatureSet f);

/// One named hyperparameter bundle. The registry reproduces the published
/// tuning tables field-for-field; steps counts are sized for full dataset
/// runs and are meant to be overridden for desk-scale experiments.
struct Preset {
    std::string name;
    double learning_rate = 1e-4;
    std::optional<double> kl_multiplier;  // absent: KL term not part of the loss
    long steps = 0;                       // detector presets use steps1/steps2 instead
    long steps1 = 0;
    long steps2 = 0;
    ScalingKind scaling = ScalingKind::log_signed;
    LayerKind layer_type = LayerKind::conv;
    std::string regularizer = "batchnorm";
    std::array<int, 3> kernels{5, 5, 5};
    std::array<int, 3> strides{2, 1, 1};
    FeatureSet features = FeatureSet::all76;
    ClassMode classification = ClassMode::multiclass;
    bool loss_p = true;
    bool loss_r = true;
    bool loss_kl = true;
    bool lbd = false;

    double klm_or_zero() const { return kl_multiplier.value_or(0.0); }
    std::size_t input_width() const { return features == FeatureSet::all76 ? 76 : 40; }
};

/// All registered presets: LLC 1-6, 4a, 4b, 4c, 6a and LBD 1-4.
const std::vector<Preset>& preset_registry();

/// Lookup by name ("4b", "lbd3", ...). Throws ConfigError whose message
/// lists the registry when the name is unknown.
const Preset& find_preset(const std::string& name);

std::string preset_registry_listing();

/// Layer widths from the input through the three encoder layers; the last
/// entry is the latent size. Stride-1 layers use valid padding, strided
/// layers half padding.
std::vector<std::size_t> preset_shape_chain(const Preset& preset, std::size_t input_width);

}  // namespace flowvae
