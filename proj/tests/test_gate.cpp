#include <doctest.h>

#include "flowvae/errors.hpp"
#include "flowvae/gate.hpp"

using namespace flowvae;

namespace {

FlowRecord flow_from(std::uint32_t src) {
    FlowRecord f;
    f.features = {0.0};
    f.src_ip = src;
    return f;
}

Dataset gate_trace(std::size_t benign, std::size_t malicious, std::size_t sources,
                   std::uint64_t seed) {
    SyntheticSpec spec = synthetic_demo_spec(4, 2, 1, 6.0, seed);
    spec.classes[0].count = benign;
    spec.classes[1].count = malicious;
    spec.classes[0].ip_pool = sources;
    spec.classes[1].ip_pool = sources;
    RngStream rng(seed);
    Dataset ds = gen_synthetic(spec, rng);
    RngStream shuffle(seed + 1);
    return shuffle_rows(ds, shuffle);
}

}  // namespace

TEST_CASE("gate_decide") {
    SUBCASE("blacklisted source blocks regardless of probability") {
        GateState state;
        state.blacklist.insert(42);
        const GateDecision d = gate_decide(flow_from(42), 1.0, state);
        CHECK(d.verdict == GateVerdict::block);
        CHECK(d.reason == GateReason::blacklisted);
    }
    SUBCASE("open gate admits everything") {
        GateState state;
        state.admit_threshold = 0.0;
        for (int i = 0; i < 10; ++i) {
            const GateDecision d = gate_decide(flow_from(1), 0.0, state);
            CHECK(d.verdict == GateVerdict::allow);
            CHECK(d.reason == GateReason::admitted);
        }
    }
    SUBCASE("capacity 2 admits two then blocks over capacity") {
        GateState state;
        state.window_capacity = 2;
        CHECK(gate_decide(flow_from(1), 0.9, state).verdict == GateVerdict::allow);
        CHECK(gate_decide(flow_from(2), 0.9, state).verdict == GateVerdict::allow);
        const GateDecision d = gate_decide(flow_from(3), 0.9, state);
        CHECK(d.verdict == GateVerdict::block);
        CHECK(d.reason == GateReason::over_capacity);
    }
    SUBCASE("count-based windows reset the admission counter") {
        GateState state;
        state.window_capacity = 1;
        state.window_size = 2;
        CHECK(gate_decide(flow_from(1), 0.9, state).verdict == GateVerdict::allow);
        CHECK(gate_decide(flow_from(2), 0.9, state).verdict == GateVerdict::block);
        // New window.
        CHECK(gate_decide(flow_from(3), 0.9, state).verdict == GateVerdict::allow);
    }
    SUBCASE("below threshold blocks with the matching reason") {
        GateState state;
        state.admit_threshold = 0.6;
        const GateDecision d = gate_decide(flow_from(1), 0.5, state);
        CHECK(d.reason == GateReason::below_threshold);
    }
    SUBCASE("probability out of range") {
        GateState state;
        CHECK_THROWS_AS(gate_decide(flow_from(1), 1.5, state), ArgumentError);
    }
}

TEST_CASE("blacklist_update") {
    GateState state;
    SUBCASE("malicious label adds the source once") {
        CHECK(blacklist_update(state, flow_from(7), true));
        CHECK(state.blacklist.count(7) == 1);
        // Second report of the same source is set-idempotent.
        CHECK_FALSE(blacklist_update(state, flow_from(7), true));
        CHECK(state.blacklist.size() == 1);
    }
    SUBCASE("benign label leaves the blacklist unchanged") {
        CHECK_FALSE(blacklist_update(state, flow_from(9), false));
        CHECK(state.blacklist.empty());
    }
    SUBCASE("missing source is a counted no-op") {
        FlowRecord f;
        f.features = {0.0};
        CHECK_FALSE(blacklist_update(state, f, true));
        CHECK(state.missing_src_warnings == 1);
    }
}

TEST_CASE("run_gate_sim with a perfect oracle classifier") {
    Dataset trace = gate_trace(500, 500, 8, 3);
    const int benign = trace.schema().benign_class();
    auto oracle = [&](const FlowRecord& f) {
        const bool malicious = f.label != benign;
        return std::pair<bool, double>{malicious, malicious ? 0.0 : 1.0};
    };
    GateState state;
    state.admit_threshold = 0.5;
    GateReport report = run_gate_sim(trace, oracle, state);

    CHECK(report.benign_pass_rate() == doctest::Approx(1.0));
    // Perfect probabilities block malicious flows at the threshold already,
    // so leakage per malicious source is bounded by one flow.
    for (const auto& [src, count] : report.malicious_allowed_by_source) {
        (void)src;
        CHECK(count <= 1);
    }
    CHECK(report.allowed + report.blocked == trace.size());
    // Every malicious source ends up blacklisted.
    CHECK(state.blacklist.size() >= 1);
}

TEST_CASE("run_gate_sim conservation and degenerate classifier") {
    Dataset trace = gate_trace(200, 200, 4, 5);
    auto half = [](const FlowRecord&) { return std::pair<bool, double>{false, 0.5}; };
    GateState state;
    state.admit_threshold = 0.6;
    GateReport report = run_gate_sim(trace, half, state);
    CHECK(report.allowed == 0);
    CHECK(report.blocked_by_reason[GateReason::below_threshold] == trace.size());
    CHECK(report.allowed + report.blocked == trace.size());
    CHECK(report.benign_pass_rate() >= 0.0);
    CHECK(report.malicious_pass_rate() <= 1.0);
}

TEST_CASE("raising the threshold never admits more flows") {
    Dataset trace = gate_trace(300, 300, 6, 7);
    const int benign = trace.schema().benign_class();
    // A frozen imperfect classifier: probability depends on the label with
    // deterministic noise from the row features.
    auto classify = [&](const FlowRecord& f) {
        double h = f.features[0] - static_cast<long>(f.features[0]);
        if (h < 0) h += 1.0;
        const double p = f.label == benign ? 0.55 + 0.45 * h : 0.45 * h;
        return std::pair<bool, double>{p < 0.5, p};
    };
    std::size_t last_allowed = SIZE_MAX;
    for (double theta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        GateState state;
        state.admit_threshold = theta;
        GateReport report = run_gate_sim(trace, classify, state);
        CHECK(report.allowed <= last_allowed);
        last_allowed = report.allowed;
    }
}

TEST_CASE("blacklist only grows during a run") {
    Dataset trace = gate_trace(100, 100, 4, 9);
    const int benign = trace.schema().benign_class();
    GateState state;
    std::size_t last = 0;
    for (std::size_t r = 0; r < trace.size(); ++r) {
        const FlowRecord f = trace.record(r);
        const bool malicious = f.label != benign;
        gate_decide(f, malicious ? 0.0 : 1.0, state);
        blacklist_update(state, f, malicious);
        CHECK(state.blacklist.size() >= last);
        last = state.blacklist.size();
    }
}
