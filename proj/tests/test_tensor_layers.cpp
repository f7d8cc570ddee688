#include <doctest.h>

#include <cmath>

#include "flowvae/errors.hpp"
#include "flowvae/layers.hpp"
#include "flowvae/rng.hpp"
#include "flowvae/tensor.hpp"

using namespace flowvae;

TEST_CASE("tensor construction enforces shape and finiteness") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t[0] == 0.0);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), ArgumentError);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
    CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.shape() == std::vector<std::size_t>{3, 2});
}

TEST_CASE("dense forward matches hand calculations") {
    SUBCASE("identity weights pass input through") {
        DenseLayer layer(2, 2, Activation::linear);
        layer.weights().at(0, 0) = 1.0;
        layer.weights().at(1, 1) = 1.0;
        Tensor x = Tensor::from_rows({{1.0, 2.0}});
        Tensor y = layer.forward(x, Mode::infer);
        CHECK(y.at(0, 0) == doctest::Approx(1.0));
        CHECK(y.at(0, 1) == doctest::Approx(2.0));
    }
    SUBCASE("zero input passes the bias") {
        DenseLayer layer(2, 2, Activation::linear);
        layer.weights().fill(7.0);
        layer.bias() = Tensor({2}, {3.0, -1.0});
        Tensor y = layer.forward(Tensor::from_rows({{0.0, 0.0}}), Mode::infer);
        CHECK(y.at(0, 0) == doctest::Approx(3.0));
        CHECK(y.at(0, 1) == doctest::Approx(-1.0));
    }
    SUBCASE("relu clamps a negative pre-activation") {
        DenseLayer layer(2, 1, Activation::relu);
        layer.weights().at(0, 0) = 2.0;
        layer.weights().at(1, 0) = -3.0;
        Tensor y = layer.forward(Tensor::from_rows({{1.0, 1.0}}), Mode::infer);
        // pre-activation 1*2 + 1*(-3) = -1
        CHECK(y.at(0, 0) == 0.0);
    }
    SUBCASE("width mismatch is a dimension error") {
        DenseLayer layer(3, 2, Activation::linear);
        CHECK_THROWS_AS(layer.forward(Tensor::from_rows({{1.0, 2.0}}), Mode::infer),
                        DimensionError);
    }
}

TEST_CASE("conv1d_output_len reproduces the published shape chains") {
    // 76 -> 38 -> 34 -> 30 (kernel 5, strides 2-1-1)
    CHECK(conv1d_output_len(76, 5, 2, Padding::half) == 38);
    CHECK(conv1d_output_len(38, 5, 1, Padding::valid) == 34);
    CHECK(conv1d_output_len(34, 5, 1, Padding::valid) == 30);
    // 40 -> 36 -> 32 -> 28 (kernel 5, strides 1-1-1)
    CHECK(conv1d_output_len(40, 5, 1, Padding::valid) == 36);
    CHECK(conv1d_output_len(36, 5, 1, Padding::valid) == 32);
    CHECK(conv1d_output_len(32, 5, 1, Padding::valid) == 28);
    // 40 -> 20 -> 10 -> 4 (kernel 7, strides 2-2-1)
    CHECK(conv1d_output_len(40, 7, 2, Padding::half) == 20);
    CHECK(conv1d_output_len(20, 7, 2, Padding::half) == 10);
    CHECK(conv1d_output_len(10, 7, 1, Padding::valid) == 4);

    CHECK_THROWS_AS(conv1d_output_len(4, 5, 1, Padding::valid), DimensionError);
    CHECK_THROWS_AS(conv1d_output_len(10, 0, 1, Padding::valid), ArgumentError);
}

TEST_CASE("receptive_field matches the published configurations") {
    CHECK(receptive_field({5, 5, 5}, {2, 1, 1}) == 21);
    CHECK(receptive_field({7, 7, 7}, {2, 2, 1}) == 43);
    const std::size_t rf13 = receptive_field({13, 13, 13}, {2, 2, 1});
    CHECK(rf13 == 85);
    CHECK(rf13 >= 76);  // covers every input feature
    CHECK_THROWS_AS(receptive_field({}, {}), ArgumentError);
    CHECK_THROWS_AS(receptive_field({5, 5}, {2}), ArgumentError);
}

TEST_CASE("receptive_field is monotone in kernels and strides") {
    RngStream rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> ks, ss;
        const std::size_t layers = 1 + rng.uniform_index(4);
        for (std::size_t i = 0; i < layers; ++i) {
            ks.push_back(1 + static_cast<int>(rng.uniform_index(12)));
            ss.push_back(1 + static_cast<int>(rng.uniform_index(3)));
        }
        const std::size_t base = receptive_field(ks, ss);
        const std::size_t which = rng.uniform_index(layers);
        auto ks2 = ks;
        ks2[which] += 1;
        CHECK(receptive_field(ks2, ss) >= base);
        auto ss2 = ss;
        ss2[which] += 1;
        CHECK(receptive_field(ks, ss2) >= base);
    }
}

TEST_CASE("conv1d forward hand cases") {
    SUBCASE("all-ones kernel sums each window") {
        Conv1DLayer layer(5, 3, 1, Padding::valid, 1, 1, Activation::linear);
        layer.kernel().fill(1.0);
        Tensor x({1, 5, 1}, {1, 1, 1, 1, 1});
        Tensor y = layer.forward(x, Mode::infer);
        REQUIRE(y.shape() == std::vector<std::size_t>{1, 3, 1});
        for (std::size_t t = 0; t < 3; ++t) CHECK(y.at(0, t, 0) == doctest::Approx(3.0));
    }
    SUBCASE("1x1 kernel scales elementwise") {
        Conv1DLayer layer(4, 1, 1, Padding::valid, 1, 1, Activation::linear);
        layer.kernel()[0] = 2.0;
        Tensor x({1, 4, 1}, {1, 2, 3, 4});
        Tensor y = layer.forward(x, Mode::infer);
        REQUIRE(y.extent(1) == 4);
        for (std::size_t t = 0; t < 4; ++t) {
            CHECK(y.at(0, t, 0) == doctest::Approx(2.0 * x.at(0, t, 0)));
        }
    }
    SUBCASE("stride-2 half padding maps 76 to 38") {
        Conv1DLayer layer(76, 5, 2, Padding::half, 1, 1, Activation::linear);
        Tensor x({1, 76, 1});
        Tensor y = layer.forward(x, Mode::infer);
        CHECK(y.extent(1) == 38);
    }
    SUBCASE("identity 1x1 kernel is the identity map") {
        Conv1DLayer layer(6, 1, 1, Padding::valid, 1, 1, Activation::linear);
        layer.kernel()[0] = 1.0;
        RngStream rng(3);
        Tensor x({2, 6, 1});
        rng.fill_normal(x);
        Tensor y = layer.forward(x, Mode::infer);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));
    }
    SUBCASE("half padding with stride 1 is rejected for layers") {
        CHECK_THROWS_AS(Conv1DLayer(10, 3, 1, Padding::half, 1, 1, Activation::linear),
                        ArgumentError);
    }
    SUBCASE("input shorter than kernel with valid padding") {
        CHECK_THROWS_AS(Conv1DLayer(2, 5, 1, Padding::valid, 1, 1, Activation::linear),
                        DimensionError);
    }
}

TEST_CASE("transposed conv mirrors the recorded pre-image length") {
    for (auto [in_len, k, s, pad] :
         {std::tuple{76UL, 5, 2, Padding::half}, std::tuple{38UL, 5, 1, Padding::valid},
          std::tuple{40UL, 7, 2, Padding::half}, std::tuple{10UL, 7, 1, Padding::valid}}) {
        const Conv1DGeom geom = make_conv1d_geom(in_len, k, s, pad);
        TransposedConv1DLayer layer(geom, 1, 1, Activation::linear);
        CHECK(layer.output_padding() >= 0);
        Tensor x({2, geom.out_len, 1});
        Tensor y = layer.forward(x, Mode::infer);
        CHECK(y.extent(1) == in_len);
    }
}

TEST_CASE("activation_forward frozen values") {
    SUBCASE("softmax of equal logits is uniform") {
        Tensor y = activation_forward(Tensor::from_rows({{0.0, 0.0}}), Activation::softmax);
        CHECK(y.at(0, 0) == doctest::Approx(0.5));
        CHECK(y.at(0, 1) == doctest::Approx(0.5));
    }
    SUBCASE("sigmoid(0) = 0.5") {
        Tensor y = activation_forward(Tensor::scalar(0.0), Activation::sigmoid);
        CHECK(y[0] == doctest::Approx(0.5));
    }
    SUBCASE("softmax([ln2, 0]) = [2/3, 1/3]") {
        Tensor y = activation_forward(Tensor::from_rows({{std::log(2.0), 0.0}}),
                                      Activation::softmax);
        CHECK(y.at(0, 0) == doctest::Approx(2.0 / 3.0));
        CHECK(y.at(0, 1) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("softmax rows sum to 1 and stay in (0,1), even for huge logits") {
        RngStream rng(17);
        for (int trial = 0; trial < 200; ++trial) {
            Tensor x({3, 5});
            // +-300 keeps exp(max-subtracted logits) above the subnormal
            // underflow edge while still overflowing a naive softmax.
            for (double& v : x.values()) v = rng.uniform(-300.0, 300.0);
            Tensor y = activation_forward(x, Activation::softmax);
            for (std::size_t r = 0; r < 3; ++r) {
                double sum = 0.0;
                for (std::size_t c = 0; c < 5; ++c) {
                    const double p = y.at(r, c);
                    CHECK(p > 0.0);
                    CHECK(p < 1.0 + 1e-12);
                    sum += p;
                }
                CHECK(std::abs(sum - 1.0) < 1e-12);
            }
        }
    }
}

TEST_CASE("batchnorm forward behavior") {
    SUBCASE("zero-variance column maps to zero") {
        BatchNorm1D bn(2);
        Tensor x = Tensor::from_rows({{5.0, 1.0}, {5.0, 2.0}, {5.0, 3.0}});
        Tensor y = bn.forward(x, Mode::train);
        for (std::size_t r = 0; r < 3; ++r) CHECK(y.at(r, 0) == doctest::Approx(0.0));
    }
    SUBCASE("gamma=0 broadcasts beta") {
        BatchNorm1D bn(2);
        bn.gamma().fill(0.0);
        bn.beta() = Tensor({2}, {4.0, -2.0});
        Tensor x = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
        Tensor y = bn.forward(x, Mode::train);
        for (std::size_t r = 0; r < 2; ++r) {
            CHECK(y.at(r, 0) == doctest::Approx(4.0));
            CHECK(y.at(r, 1) == doctest::Approx(-2.0));
        }
    }
    SUBCASE("already standardized column passes through") {
        BatchNorm1D bn(1, 0.99, 1e-12);
        Tensor x = Tensor::from_rows({{-1.0}, {1.0}});
        Tensor y = bn.forward(x, Mode::train);
        CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
        CHECK(y.at(1, 0) == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("train mode rejects a batch of one") {
        BatchNorm1D bn(3);
        Tensor x({1, 3});
        CHECK_THROWS_AS(bn.forward(x, Mode::train), DegenerateBatchError);
    }
    SUBCASE("infer mode is a deterministic affine map") {
        BatchNorm1D bn(2);
        // Run one train pass to move the running stats somewhere non-trivial.
        RngStream rng(5);
        Tensor warm({8, 2});
        rng.fill_normal(warm);
        bn.forward(warm, Mode::train);

        Tensor probe = Tensor::from_rows({{0.3, -0.7}});
        Tensor alone = bn.forward(probe, Mode::infer);
        // The same row inside a different batch must map identically.
        Tensor batch = Tensor::from_rows({{0.3, -0.7}, {100.0, 50.0}, {-3.0, 9.0}});
        Tensor mixed = bn.forward(batch, Mode::infer);
        CHECK(alone.at(0, 0) == mixed.at(0, 0));
        CHECK(alone.at(0, 1) == mixed.at(0, 1));
    }
}
