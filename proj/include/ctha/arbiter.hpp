#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ctha/authority.hpp"

namespace ctha {

/// Shared step context: the logical step counter plus named event flags.
/// Trigger predicates, urgency overrides and scripted faults all read flags;
/// "emergency" is special-cased by the priority function.
struct Context {
    std::uint64_t step = 0;
    bool emergency = false;
    std::set<std::string> flags;

    bool has_flag(const std::string& name) const { return flags.count(name) > 0; }
};

/// Priority scoring parameters: per-layer base priorities (higher for slower
/// layers by default), urgency and confidence weights, the comparison margin
/// epsilon, the tie-break rule, and an optional learned scoring hook that
/// adds to the rule-based terms (0 when absent).
struct PriorityConfig {
    std::vector<double> alpha = {0.1, 0.2, 0.3, 0.4};
    double beta = 0.5;
    double gamma = 0.2;
    double epsilon = 0.05;

    /// prefer_faster masks the slower proposal on a tie so the faster layer
    /// survives; pseudocode masks the faster one instead. Both are
    /// deterministic.
    enum class TieBreak { prefer_faster, pseudocode };
    TieBreak tie_break = TieBreak::prefer_faster;

    using LearnedHook = std::function<double(const ActionProposal&, const Context&)>;
    LearnedHook learned_hook;  // must be pure; not serialized

    void check_invariants() const;

    static PriorityConfig from_json(const Json& j);
    Json to_json() const;
};

/// Resolution record: the single final action, the per-proposal survival
/// mask, the detected conflict pairs (indices into the input list, i < j),
/// and the priorities computed for the masking loop (empty when the
/// no-conflict early exit skipped priority computation).
struct Resolution {
    ActionProposal final;
    std::vector<bool> mask;
    std::vector<std::pair<std::size_t, std::size_t>> conflicts;
    std::vector<double> priorities;

    Json to_json() const;
};

/// Two proposals conflict iff they claim a common resource or assert
/// contradictory effect tokens ("x" against "!x"). Symmetric.
bool detect_conflict(const ActionProposal& a, const ActionProposal& b);

/// rho = alpha[layer] + beta * urgency + gamma * confidence + hook. Urgency
/// is the proposal's own except under an emergency context, where Reflex
/// proposals count as maximally urgent.
double priority(const ActionProposal& a, const Context& ctx, const PriorityConfig& cfg);

/// True when the proposal is an Institutional policy-enforcement action
/// (layer == institutional_layer, category == policy_update). Such proposals
/// are never masked by lower layers.
bool is_policy_enforcement(const ActionProposal& a, int institutional_layer);

/// Deterministic, total resolution of per-layer proposals:
///   1. collect conflict pairs over i < j;
///   2. no conflicts: compose everything (priorities never computed);
///   3. otherwise walk pairs in lexicographic order, masking the
///      lower-priority side with margin epsilon and the configured tie rule;
///      Institutional policy enforcement always survives against lower
///      layers, and under an emergency context Reflex safety proposals
///      (error_retry / immediate_response) survive against anything
///      non-Institutional;
///   4. compose the surviving proposals (noop when none survive).
/// `institutional_layer` defaults to the highest configured layer.
Resolution resolve(std::span<const ActionProposal> actions, const Context& ctx,
                   const PriorityConfig& cfg, std::optional<int> institutional_layer = {});

/// Compose pairwise conflict-free survivors into one action: none -> noop,
/// one -> itself, several -> a composite ordered fastest layer first with
/// unioned resources/effects, the widest time band, the weakest confidence
/// and the strongest urgency; the payload lists the member proposals in
/// execution order.
ActionProposal compose(std::span<const ActionProposal> survivors);

}  // namespace ctha
