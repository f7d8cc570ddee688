#include <doctest.h>

#include <optional>

#include "flowvae/errors.hpp"
#include "flowvae/presets.hpp"

using namespace flowvae;

namespace {

// Fixture transcribed from the published tuning tables, kept separate from
// the registry implementation on purpose.
struct PresetFixture {
    const char* name;
    double lr;
    std::optional<double> klm;
    long steps;   // llc
    long steps1;  // lbd
    long steps2;
    ScalingKind st;
    LayerKind lt;
    int ks;
    int s0, s1, s2;
    FeatureSet features;
    ClassMode ct;
    bool p, r, kl;
    bool lbd;
};

const PresetFixture kFixture[] = {
    // name  lr     klm      steps   s1      s2     ST                              LT                ks s0 s1 s2 features            CT                     P  R  KL  lbd
    {"1", 1e-2, 1.0, 15000, 0, 0, ScalingKind::none, LayerKind::conv, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::multiclass, true, true, true, false},
    {"2", 1e-2, 1e-2, 15000, 0, 0, ScalingKind::minmax_train, LayerKind::conv, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::multiclass, true, true, true, false},
    {"3", 1e-4, 1e-2, 30000, 0, 0, ScalingKind::minmax_train_test, LayerKind::conv, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::multiclass, true, true, true, false},
    {"4", 1e-4, 1e-4, 30000, 0, 0, ScalingKind::log_signed, LayerKind::conv, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::multiclass, true, true, true, false},
    {"5", 1e-4, 1e-4, 30000, 0, 0, ScalingKind::log_signed, LayerKind::dense, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::multiclass, true, true, true, false},
    {"6", 1e-4, std::nullopt, 30000, 0, 0, ScalingKind::log_signed, LayerKind::conv, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::multiclass, true, false, false, false},
    {"4a", 1e-4, 1e-4, 30000, 0, 0, ScalingKind::log_signed, LayerKind::conv, 5, 1, 1, 1,
     FeatureSet::top40, ClassMode::binary, true, true, true, false},
    {"4b", 1e-4, 1e-6, 50000, 0, 0, ScalingKind::log_signed, LayerKind::conv, 5, 1, 1, 1,
     FeatureSet::top40, ClassMode::binary, true, true, true, false},
    {"4c", 1e-4, 1e-6, 140000, 0, 0, ScalingKind::log_signed, LayerKind::conv, 7, 2, 2, 1,
     FeatureSet::top40, ClassMode::binary, true, true, true, false},
    {"6a", 1e-4, std::nullopt, 30000, 0, 0, ScalingKind::log_signed, LayerKind::conv, 5, 1, 1, 1,
     FeatureSet::top40, ClassMode::binary, true, false, false, false},
    {"lbd1", 1e-4, 1.0, 0, 20000, 30000, ScalingKind::log_signed, LayerKind::conv, 5, 2, 1, 1,
     FeatureSet::all76, ClassMode::binary, true, true, true, true},
    {"lbd2", 1e-4, 4.0, 0, 20000, 30000, ScalingKind::log_signed, LayerKind::conv, 5, 1, 1, 1,
     FeatureSet::top40, ClassMode::binary, true, true, true, true},
    {"lbd3", 1e-4, 1e-6, 0, 1500, 30000, ScalingKind::log_signed, LayerKind::conv, 5, 1, 1, 1,
     FeatureSet::top40, ClassMode::binary, true, true, true, true},
    {"lbd4", 1e-4, 1e-6, 0, 100000, 30000, ScalingKind::log_signed, LayerKind::conv, 7, 2, 2, 1,
     FeatureSet::top40, ClassMode::binary, true, true, true, true},
};

}  // namespace

TEST_CASE("registry matches the table fixture field-for-field") {
    const auto& registry = preset_registry();
    REQUIRE(registry.size() == 14);  // 10 llc + 4 lbd

    std::size_t llc = 0, lbd = 0;
    for (const auto& p : registry) (p.lbd ? lbd : llc)++;
    CHECK(llc == 10);
    CHECK(lbd == 4);

    for (const auto& fx : kFixture) {
        INFO("preset ", fx.name);
        const Preset& p = find_preset(fx.name);
        CHECK(p.learning_rate == fx.lr);
        CHECK(p.kl_multiplier == fx.klm);
        if (fx.lbd) {
            CHECK(p.steps1 == fx.steps1);
            CHECK(p.steps2 == fx.steps2);
        } else {
            CHECK(p.steps == fx.steps);
        }
        CHECK(p.scaling == fx.st);
        CHECK(p.layer_type == fx.lt);
        CHECK(p.regularizer == "batchnorm");
        for (int k : p.kernels) CHECK(k == fx.ks);
        CHECK(p.strides[0] == fx.s0);
        CHECK(p.strides[1] == fx.s1);
        CHECK(p.strides[2] == fx.s2);
        CHECK(p.features == fx.features);
        CHECK(p.classification == fx.ct);
        CHECK(p.loss_p == fx.p);
        CHECK(p.loss_r == fx.r);
        CHECK(p.loss_kl == fx.kl);
        CHECK(p.lbd == fx.lbd);
    }
}

TEST_CASE("unknown preset lists the registry") {
    try {
        find_preset("nosuch");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("nosuch") != std::string::npos);
        CHECK(msg.find("4b") != std::string::npos);
        CHECK(msg.find("lbd3") != std::string::npos);
    }
}

TEST_CASE("shape chains derived from presets") {
    CHECK(preset_shape_chain(find_preset("4"), 76) ==
          std::vector<std::size_t>{76, 38, 34, 30});
    CHECK(preset_shape_chain(find_preset("4b"), 40) ==
          std::vector<std::size_t>{40, 36, 32, 28});
    CHECK(preset_shape_chain(find_preset("lbd4"), 40) ==
          std::vector<std::size_t>{40, 20, 10, 4});
}

TEST_CASE("input widths follow the feature set") {
    CHECK(find_preset("4").input_width() == 76);
    CHECK(find_preset("4b").input_width() == 40);
}
