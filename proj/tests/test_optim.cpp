#include <doctest.h>

#include <cmath>

#include "flowvae/errors.hpp"
#include "flowvae/optim.hpp"

using namespace flowvae;

namespace {

// Scalar re-implementation of the bias-corrected update, kept independent
// of the production code on purpose.
struct ScalarAdamOracle {
    double m = 0.0, v = 0.0;
    long t = 0;
    double step(double theta, double g, const OptimHyper& h) {
        t += 1;
        m = h.beta1 * m + (1.0 - h.beta1) * g;
        v = h.beta2 * v + (1.0 - h.beta2) * g * g;
        const double m_hat = m / (1.0 - std::pow(h.beta1, t));
        const double v_hat = v / (1.0 - std::pow(h.beta2, t));
        return theta - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
};

}  // namespace

TEST_CASE("first adam step matches the hand-evaluated formula") {
    Tensor theta = Tensor::scalar(0.0);
    ParamSet params{{"p", &theta, false}};
    GradStore grads;
    grads.ensure("p", {1})[0] = 1.0;
    AdamState state;
    OptimHyper hyper;
    hyper.learning_rate = 0.1;

    adam_step(params, grads, state, hyper);
    CHECK(state.step_count == 1);
    // m_hat = 1, v_hat = 1 at t=1, so theta = -0.1 / (1 + 1e-8).
    CHECK(theta[0] == doctest::Approx(-0.0999999990).epsilon(1e-9));
}

TEST_CASE("zero gradients leave parameters unchanged") {
    Tensor theta({3}, {1.0, -2.0, 0.5});
    ParamSet params{{"p", &theta, false}};
    GradStore grads;
    grads.ensure("p", {3});
    AdamState state;
    OptimHyper hyper;
    adam_step(params, grads, state, hyper);
    CHECK(theta[0] == 1.0);
    CHECK(theta[1] == -2.0);
    CHECK(theta[2] == 0.5);
}

TEST_CASE("two consecutive steps match the scalar oracle to 1e-12") {
    Tensor theta = Tensor::scalar(0.0);
    ParamSet params{{"p", &theta, false}};
    AdamState state;
    OptimHyper hyper;
    hyper.learning_rate = 0.1;

    ScalarAdamOracle oracle;
    double expect = 0.0;
    for (int i = 0; i < 2; ++i) {
        GradStore grads;
        grads.ensure("p", {1})[0] = 1.0;
        adam_step(params, grads, state, hyper);
        expect = oracle.step(expect, 1.0, hyper);
    }
    CHECK(std::abs(theta[0] - expect) < 1e-12);
}

TEST_CASE("missing gradient raises a consistency error") {
    Tensor a = Tensor::scalar(0.0), b = Tensor::scalar(0.0);
    ParamSet params{{"a", &a, false}, {"b", &b, false}};
    GradStore grads;
    grads.ensure("a", {1})[0] = 1.0;
    AdamState state;
    OptimHyper hyper;
    CHECK_THROWS_AS(adam_step(params, grads, state, hyper), ConsistencyError);
    CHECK(state.step_count == 0);  // nothing was applied
}

TEST_CASE("adam drives a quadratic to zero") {
    Tensor theta = Tensor::scalar(1.0);
    ParamSet params{{"p", &theta, false}};
    AdamState state;
    OptimHyper hyper;
    hyper.learning_rate = 0.05;
    for (int step = 0; step < 500; ++step) {
        GradStore grads;
        grads.ensure("p", {1})[0] = 2.0 * theta[0];  // d(theta^2)
        adam_step(params, grads, state, hyper);
    }
    CHECK(std::abs(theta[0]) < 1e-2);
}

TEST_CASE("adam_step is deterministic bit-for-bit") {
    auto run = [] {
        Tensor theta({4}, {0.1, -0.2, 0.3, -0.4});
        ParamSet params{{"p", &theta, false}};
        AdamState state;
        OptimHyper hyper;
        hyper.learning_rate = 0.01;
        for (int i = 0; i < 20; ++i) {
            GradStore grads;
            Tensor& g = grads.ensure("p", {4});
            for (std::size_t j = 0; j < 4; ++j) {
                g[j] = std::sin(static_cast<double>(i + 1) * (static_cast<double>(j) + 0.5));
            }
            adam_step(params, grads, state, hyper);
        }
        return std::vector<double>(theta.data(), theta.data() + 4);
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("l2_penalty covers conv kernels only") {
    SUBCASE("lambda 0 is a no-op") {
        Tensor w = Tensor::scalar(3.0);
        ParamSet params{{"c.w", &w, true}};
        GradStore grads;
        grads.ensure("c.w", {1});
        CHECK(l2_penalty(params, 0.0, &grads) == 0.0);
        CHECK(grads.at("c.w")[0] == 0.0);
    }
    SUBCASE("single kernel weight w=3, lambda=0.5") {
        Tensor w = Tensor::scalar(3.0);
        ParamSet params{{"c.w", &w, true}};
        GradStore grads;
        grads.ensure("c.w", {1});
        const double penalty = l2_penalty(params, 0.5, &grads);
        CHECK(penalty == doctest::Approx(4.5));     // 0.5 * 9
        CHECK(grads.at("c.w")[0] == doctest::Approx(3.0));  // 2 * 0.5 * 3
    }
    SUBCASE("dense weights and biases are untouched") {
        Tensor w = Tensor::scalar(3.0), d = Tensor::scalar(5.0);
        ParamSet params{{"c.w", &w, true}, {"fc.w", &d, false}};
        GradStore grads;
        grads.ensure("c.w", {1});
        grads.ensure("fc.w", {1});
        l2_penalty(params, 0.5, &grads);
        CHECK(grads.at("fc.w")[0] == 0.0);
    }
    SUBCASE("penalty is invariant under sign flip") {
        Tensor w({3}, {1.0, -2.0, 0.5});
        ParamSet params{{"c.w", &w, true}};
        const double p1 = l2_penalty(params, 0.7, nullptr);
        for (double& x : w.values()) x = -x;
        const double p2 = l2_penalty(params, 0.7, nullptr);
        CHECK(p1 == doctest::Approx(p2).epsilon(1e-15));
    }
    SUBCASE("gradient matches finite differences of the penalty") {
        Tensor w({4}, {0.3, -1.2, 2.0, 0.01});
        ParamSet params{{"c.w", &w, true}};
        GradStore grads;
        grads.ensure("c.w", {4});
        const double lambda = 0.37;
        l2_penalty(params, lambda, &grads);
        const double h = 1e-6;
        for (std::size_t i = 0; i < 4; ++i) {
            const double orig = w[i];
            w[i] = orig + h;
            const double up = l2_penalty(params, lambda, nullptr);
            w[i] = orig - h;
            const double down = l2_penalty(params, lambda, nullptr);
            w[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            CHECK(std::abs(grads.at("c.w")[i] - numeric) < 1e-8);
        }
    }
}
