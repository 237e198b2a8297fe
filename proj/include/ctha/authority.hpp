#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctha/encoding.hpp"

namespace ctha {

/// Closed enumeration of decision categories. The per-layer authority tables
/// are phrased over these; the prose-to-category mapping ships in
/// config/authority.json and is overridable there.
enum class ActionCategory {
    tool_invocation,
    parameter_selection,
    error_retry,
    immediate_response,
    step_ordering,
    local_optimization,
    memory_update,
    subtask_split,
    plan_revision,
    goal_decomposition,
    resource_allocation,
    deadline_setting,
    policy_update,
    threshold_tuning,
    constraint_modification,
    meta_learning,
    noop,
};

std::string_view category_name(ActionCategory category);
ActionCategory category_from_name(std::string_view name);  // DomainError on unknown
const std::vector<ActionCategory>& all_categories();

/// Stand-in for an unbounded upper time scale; canonical JSON has no
/// infinity, so "no upper bound" serializes as this many seconds.
inline constexpr double kTauUnbounded = 1e18;

/// A layer's candidate action: what it wants to do, what it touches
/// (resources), what it asserts about the world (effect tokens, with "!x"
/// negating "x"), the time-scale band the action is appropriate for, and the
/// layer's own confidence/urgency read.
struct ActionProposal {
    std::string id;
    int layer = 1;
    ActionCategory category = ActionCategory::noop;
    std::set<std::string> resources;
    std::set<std::string> effects;
    double tau_min = 0.0;
    double tau_max = kTauUnbounded;
    double confidence = 1.0;
    double urgency = 0.0;
    Json payload;

    /// tau_min <= tau_max, confidence/urgency in [0,1], no effect token
    /// present in both plain and negated form.
    void check_invariants() const;

    static ActionProposal noop_for(int layer);

    Json to_json() const;
    static ActionProposal from_json(const Json& j);

    friend bool operator==(const ActionProposal&, const ActionProposal&) = default;
};

/// The set of decisions a layer may make: a characteristic time scale plus
/// permitted and forbidden category sets. noop is permitted everywhere;
/// permitted and forbidden never overlap. Categories in neither set are
/// outside the manifold (permitted is the whitelist; forbidden records the
/// explicit table entries).
struct AuthorityManifold {
    int layer = 1;
    double tau = 1.0;
    std::set<ActionCategory> permitted;
    std::set<ActionCategory> forbidden;

    void check_invariants() const;
};

using DowngradeMap = std::map<ActionCategory, ActionCategory>;

/// Manifold tables plus per-layer downgrade maps (category substitutions the
/// projection may apply when the proposed category is out of scope).
struct AuthorityConfig {
    std::vector<AuthorityManifold> manifolds;            // index 0 = layer 1
    std::map<int, DowngradeMap> downgrades;              // keyed by layer

    /// Default four-layer tables: Reflex 0.1s, Tactical 10s, Strategic 600s,
    /// Institutional 86400s (geometric midpoints of the layer bands), category
    /// sets transcribing the per-layer permitted/forbidden decisions, and one
    /// downgrade (Tactical plan_revision -> subtask_split). Layers beyond 4
    /// get permissive manifolds with geometrically extended time scales.
    static AuthorityConfig defaults(int layers = 4);

    static AuthorityConfig from_json(const Json& j);
    Json to_json() const;

    const AuthorityManifold& manifold_for(int layer) const;  // DomainError if absent
    const DowngradeMap* downgrades_for(int layer) const;
};

/// True iff the proposal's time-scale band admits the layer's tau AND its
/// category is permitted there.
bool within_authority(const ActionProposal& a, const AuthorityManifold& man);

/// Total projection onto the manifold. In-scope proposals pass through; a
/// category with a configured downgrade to a permitted category is
/// substituted (payload kept) when the time band still admits the layer;
/// everything else collapses to noop. A time-scale mismatch alone is not
/// repairable. The output is always within the manifold.
ActionProposal project_authority(const ActionProposal& a, const AuthorityManifold& man,
                                 const DowngradeMap* downgrades = nullptr);

/// Pluggable post-hoc verification scoring in [0,1]. The default hook is the
/// rule-based manifold test (1.0 in scope, 0.0 outside); learned verifiers
/// slot in behind the same signature.
using VerifierHook = std::function<double(const ActionProposal&, int layer)>;

VerifierHook default_verifier(const AuthorityConfig& cfg);

/// Apply the hook and enforce the range contract; a hook value outside [0,1]
/// is a ContractViolation.
double verify(const ActionProposal& a, int layer, const VerifierHook& hook);

}  // namespace ctha
