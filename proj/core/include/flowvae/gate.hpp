#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "flowvae/flow_data.hpp"

namespace flowvae {

enum class GateVerdict { allow, block };
enum class GateReason { blacklisted, over_capacity, below_threshold, admitted };

std::string gate_reason_name(GateReason r);

struct GateDecision {
    GateVerdict verdict = GateVerdict::block;
    GateReason reason = GateReason::below_threshold;
};

/// Blacklist plus capacity-bounded partial admission. Windows are counted
/// in processed flows (window_size 0 keeps one unbounded window); at most
/// window_capacity flows are admitted per window.
struct GateState {
    std::set<std::uint32_t> blacklist;
    std::size_t window_capacity = SIZE_MAX;
    std::size_t window_size = 0;
    std::size_t window_admitted = 0;
    std::size_t window_processed = 0;
    double admit_threshold = 0.5;
    std::size_t missing_src_warnings = 0;
};

/// Blacklisted source -> block; else admit when prob_benign >= threshold
/// and the window has capacity. Updates the window counters.
GateDecision gate_decide(const FlowRecord& flow, double prob_benign, GateState& state);

/// Adds the flow's source to the blacklist iff the classifier called it
/// malicious. Missing source address is a counted no-op. Returns whether
/// the blacklist grew.
bool blacklist_update(GateState& state, const FlowRecord& flow, bool classified_malicious);

struct GateReport {
    std::size_t total = 0;
    std::size_t allowed = 0;
    std::size_t blocked = 0;
    std::map<GateReason, std::size_t> blocked_by_reason;
    std::size_t benign_total = 0, benign_allowed = 0;
    std::size_t malicious_total = 0, malicious_allowed = 0;
    std::map<std::uint32_t, std::size_t> malicious_allowed_by_source;

    double benign_pass_rate() const;
    double malicious_pass_rate() const;
    std::string text() const;
    std::string reason_csv() const;
};

/// Streams the trace in order through classify -> gate_decide ->
/// blacklist_update. True labels are used only for the report, never for
/// decisions. `classify` returns (malicious?, prob_benign).
GateReport run_gate_sim(const Dataset& trace,
                        const std::function<std::pair<bool, double>(const FlowRecord&)>& classify,
                        GateState& state);

}  // namespace flowvae
