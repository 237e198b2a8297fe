#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctha/runtime.hpp"

namespace ctha {

enum class FaultKind { perturb, invalid_message, authority_overreach, conflict_pair };

std::string_view fault_name(FaultKind kind);
FaultKind fault_from_name(std::string_view name);

/// One scheduled fault: at `step`, `layer` misbehaves. perturb bumps the
/// layer's state row by epsilon; invalid_message emits a malformed summary;
/// authority_overreach proposes a category outside the layer's manifold;
/// conflict_pair makes the layer and its slower neighbour claim the same
/// resource.
struct Fault {
    std::uint64_t step = 1;
    int layer = 1;
    FaultKind kind = FaultKind::perturb;
    double epsilon = 0.1;
};

/// One scripted line for a layer at a step: an optional proposal and optional
/// raw messages (possibly malformed, to exercise repair).
struct ScriptEntry {
    std::uint64_t step = 1;
    std::optional<Json> proposal;  // ActionProposal JSON
    std::optional<Json> summary;
    std::optional<Json> plan;
    std::optional<Json> policy;
};

/// A deterministic desk-scale experiment: seeded state, a step horizon,
/// per-layer scripted behaviour, scheduled context events and a fault plan.
struct ScenarioScript {
    std::uint64_t seed = 42;
    std::uint64_t horizon = 1;
    int layers = 4;
    int feature_dim = 8;
    std::optional<Mode> mode;
    std::optional<ActivationConfig> activation;
    std::map<std::uint64_t, std::set<std::string>> events;  // step -> flags
    std::map<int, std::vector<ScriptEntry>> policy_scripts; // layer -> entries
    std::vector<Fault> fault_plan;
    std::map<std::string, double> subgoal_tau;
    msg::SanitizeConfig sanitize;

    void check_invariants() const;

    static ScenarioScript from_json(const Json& j);
    Json to_json() const;

    static ScenarioScript load(const std::string& path);
};

/// Raw traces plus aggregates recomputed from them; the aggregates are
/// derived data only and tests hold the two together.
struct ExperimentReport {
    std::vector<StepTrace> traces;
    Json aggregates;

    /// One canonical-encoding object per line: every trace, then a final
    /// {"aggregates": ...} line.
    std::string to_jsonl() const;
    std::string to_csv() const;
};

/// The proposals a step actually emitted to the environment: the single
/// resolved action (composite members flattened) or, in unconstrained mode,
/// every member of the emitted bundle.
std::vector<ActionProposal> emitted_proposals(const StepTrace& trace);

/// Recompute report aggregates from raw traces (conflict and violation
/// rates, traffic totals, gain extremes, the active-layer histogram, and the
/// env-side conflict/violation counts).
Json aggregate_traces(const std::vector<StepTrace>& traces, const AuthorityConfig& authority);

/// Execute the scenario for its horizon in the given mode. Deterministic:
/// identical (script, mode) pairs produce byte-identical reports.
ExperimentReport run_scenario(const ScenarioScript& script, Mode mode);

struct GainDistribution {
    std::size_t n = 4;
    double lo = 0.0;
    double hi = 1.5;
};

/// Gain-versus-depth curves over random residual chains: the unconstrained
/// arm uses raw sampled matrices, the constrained arm pushes the same samples
/// through the doubly stochastic projection first.
struct GainCurve {
    struct Row {
        std::size_t depth = 0;
        double unc_median = 0, unc_q25 = 0, unc_q75 = 0;
        double con_median = 0;
        double con_fwd_min = 0, con_fwd_max = 0;
        double con_bwd_min = 0, con_bwd_max = 0;
    };
    std::vector<Row> rows;

    Json to_json() const;
    std::string to_csv() const;
};

GainCurve gain_experiment(std::size_t depth, std::size_t trials, std::uint64_t seed,
                          const GainDistribution& dist = {});

/// eps_out / eps_in for a perturbation entering at the fastest layer and
/// propagating through the whole chain.
double amplification_experiment(double eps0, std::span<const Matrix> chain);

/// One all-active step per (n, mode); rows must match the closed-form
/// per-step totals exactly.
struct OverheadTable {
    struct Row {
        int n = 0;
        Mode mode = Mode::ctha;
        std::uint64_t messages = 0;
        std::uint64_t comparisons = 0;
    };
    std::vector<Row> rows;

    Json to_json() const;
    std::string to_csv() const;
};

OverheadTable overhead_experiment(const std::vector<int>& n_range);

/// Histogram of |active layers| per step for a scenario run in ctha mode.
std::map<std::size_t, std::uint64_t> activation_experiment(const ScenarioScript& script,
                                                           std::uint64_t horizon);

}  // namespace ctha
