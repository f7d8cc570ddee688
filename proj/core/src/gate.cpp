#include "flowvae/gate.hpp"

#include <sstream>

#include "flowvae/errors.hpp"

namespace flowvae {

std::string gate_reason_name(GateReason r) {
    switch (r) {
        case GateReason::blacklisted: return "blacklisted";
        case GateReason::over_capacity: return "over_capacity";
        case GateReason::below_threshold: return "below_threshold";
        case GateReason::admitted: return "admitted";
    }
    return "?";
}

GateDecision gate_decide(const FlowRecord& flow, double prob_benign, GateState& state) {
    if (prob_benign < 0.0 || prob_benign > 1.0) {
        throw ArgumentError("gate_decide: prob_benign must be in [0,1]");
    }
    state.window_processed++;
    GateDecision decision;
    if (flow.src_ip && state.blacklist.count(*flow.src_ip)) {
        decision = {GateVerdict::block, GateReason::blacklisted};
    } else if (prob_benign < state.admit_threshold) {
        decision = {GateVerdict::block, GateReason::below_threshold};
    } else if (state.window_admitted >= state.window_capacity) {
        decision = {GateVerdict::block, GateReason::over_capacity};
    } else {
        state.window_admitted++;
        decision = {GateVerdict::allow, GateReason::admitted};
    }
    if (state.window_size > 0 && state.window_processed >= state.window_size) {
        state.window_processed = 0;
        state.window_admitted = 0;
    }
    return decision;
}

bool blacklist_update(GateState& state, const FlowRecord& flow, bool classified_malicious) {
    if (!flow.src_ip) {
        state.missing_src_warnings++;
        return false;
    }
    if (!classified_malicious) return false;
    return state.blacklist.insert(*flow.src_ip).second;
}

double GateReport::benign_pass_rate() const {
    return benign_total > 0 ? static_cast<double>(benign_allowed) /
                                  static_cast<double>(benign_total)
                            : 0.0;
}

double GateReport::malicious_pass_rate() const {
    return malicious_total > 0 ? static_cast<double>(malicious_allowed) /
                                     static_cast<double>(malicious_total)
                               : 0.0;
}

std::string GateReport::text() const {
    std::ostringstream os;
    os << "gate simulation over " << total << " flows\n"
       << "  allowed: " << allowed << ", blocked: " << blocked << "\n"
       << "  benign pass-rate:    " << benign_pass_rate() << " (" << benign_allowed << "/"
       << benign_total << ")\n"
       << "  malicious pass-rate: " << malicious_pass_rate() << " (" << malicious_allowed << "/"
       << malicious_total << ")\n";
    for (const auto& [reason, count] : blocked_by_reason) {
        os << "  blocked/" << gate_reason_name(reason) << ": " << count << "\n";
    }
    return os.str();
}

std::string GateReport::reason_csv() const {
    std::ostringstream os;
    os << "reason,count\n";
    os << "admitted," << allowed << '\n';
    for (const auto& [reason, count] : blocked_by_reason) {
        os << gate_reason_name(reason) << ',' << count << '\n';
    }
    return os.str();
}

GateReport run_gate_sim(const Dataset& trace,
                        const std::function<std::pair<bool, double>(const FlowRecord&)>& classify,
                        GateState& state) {
    GateReport report;
    const int benign = trace.schema().benign_class();
    for (std::size_t r = 0; r < trace.size(); ++r) {
        const FlowRecord flow = trace.record(r);
        const auto [malicious, prob_benign] = classify(flow);
        const GateDecision decision = gate_decide(flow, prob_benign, state);
        blacklist_update(state, flow, malicious);

        report.total++;
        const bool truly_benign = flow.label == benign;
        if (truly_benign) {
            report.benign_total++;
        } else {
            report.malicious_total++;
        }
        if (decision.verdict == GateVerdict::allow) {
            report.allowed++;
            if (truly_benign) {
                report.benign_allowed++;
            } else {
                report.malicious_allowed++;
                if (flow.src_ip) report.malicious_allowed_by_source[*flow.src_ip]++;
            }
        } else {
            report.blocked++;
            report.blocked_by_reason[decision.reason]++;
        }
    }
    return report;
}

}  // namespace flowvae
