#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ctha/arbiter.hpp"
#include "ctha/authority.hpp"
#include "ctha/hierarchy.hpp"
#include "ctha/messages.hpp"

namespace ctha {

enum class Mode { ctha, unconstrained, single_scale };

std::string_view mode_name(Mode mode);
Mode mode_from_name(std::string_view name);  // accepts "single-scale" too

/// Per-layer activation rule: a base period (nullopt = trigger-only) plus a
/// set of named trigger flags. Layer 1 runs every observation, so its period
/// is pinned to 1.
struct ActivationConfig {
    std::vector<std::optional<std::uint64_t>> periods;  // index 0 = layer 1
    std::vector<std::set<std::string>> triggers;

    static ActivationConfig defaults(int layers = 4);
    void check_invariants() const;

    static ActivationConfig from_json(const Json& j);
    Json to_json() const;
};

/// Active iff the step hits the layer's period (t mod k == 0, 1-based t) or
/// any of the layer's trigger flags is raised in the context.
bool is_active(int layer, std::uint64_t t, const Context& ctx, const ActivationConfig& cfg);

/// Fixed routing topology: Summaries hop one level up, Plans hop one level
/// down, Policy broadcasts from the top layer over a single shared channel.
struct MessageRouting {
    int layers = 4;

    /// Channel identifiers the layer listens on ("summary:<sender>",
    /// "plan:<sender>", "policy").
    std::set<std::string> inbound_channels(int layer) const;
};

/// Two layers may run concurrently iff their inbound channel sets and their
/// declared resource sets are both disjoint. `resources` is indexed by layer
/// (element 0 = layer 1).
bool can_parallel(int i, int j, const MessageRouting& routes,
                  std::span<const std::set<std::string>> resources);

/// Byte cache for inter-layer messages, keyed by (sender layer, kind). When
/// the sender's state is unchanged since its last activation the stored bytes
/// are returned verbatim; otherwise `fresh` is invoked and stored.
class MessageCache {
public:
    struct Fetch {
        std::string bytes;
        bool hit = false;
    };

    Fetch fetch(int layer, msg::MessageKind kind, bool state_changed,
                const std::function<std::string()>& fresh);

    void clear() { entries_.clear(); }

private:
    std::map<std::pair<int, msg::MessageKind>, std::string> entries_;
};

/// Free-function form of the cache contract: returns the message bytes for
/// (layer, kind) at step t, reusing the stored bytes when state_changed is
/// false. A cold cache falls through to `fresh` regardless.
std::string cached_message(MessageCache& cache, int layer, msg::MessageKind kind,
                           std::uint64_t t, bool state_changed,
                           const std::function<std::string()>& fresh);

/// Per-step record: who ran, the traffic and comparison counters under the
/// per-step accounting taxonomy, conflict/violation/cache tallies, the action
/// that reached the environment and the step's composite mapping gains.
struct StepTrace {
    std::uint64_t step = 0;
    std::set<int> active_layers;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_received = 0;
    std::uint64_t comparisons = 0;
    std::uint64_t conflicts = 0;
    std::uint64_t violations_blocked = 0;
    std::uint64_t cache_hits = 0;
    ActionProposal final_action;
    double gain_fwd = 1.0;
    double gain_bwd = 1.0;

    Json to_json() const;
    static StepTrace from_json(const Json& j);

    friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

/// Totals for a step: (messages, comparisons).
std::pair<std::uint64_t, std::uint64_t> count_traffic(const StepTrace& trace);

/// What a layer sees when invoked: its index, the step, the shared context,
/// its state row and the typed messages delivered since its last turn.
struct LayerView {
    struct Inbound {
        msg::MessageKind kind;
        int sender = 0;
        Json body;
    };

    int layer = 1;
    std::uint64_t step = 0;
    Context ctx;
    Vector state_row;
    std::vector<Inbound> inbox;
};

/// What a layer returns: an optional action proposal (absent = noop) and
/// optional raw outbound messages, each subject to the contract projections
/// in constrained mode. Layers below the top may override their
/// auto-generated summary; layers above the bottom may emit a plan; the top
/// layer may emit a policy.
struct LayerDecision {
    std::optional<ActionProposal> proposal;
    std::optional<Json> summary;
    std::optional<Json> plan;
    std::optional<Json> policy;
};

using LayerAgent = std::function<LayerDecision(const LayerView&)>;

/// Final-action sink. The harness records applications; live deployments
/// would execute them.
class EnvironmentHook {
public:
    virtual ~EnvironmentHook() = default;
    virtual void apply(std::uint64_t step, std::span<const ActionProposal> actions) = 0;
};

struct RuntimeConfig {
    Mode mode = Mode::ctha;
    int layers = 4;
    int feature_dim = 8;
    ActivationConfig activation = ActivationConfig::defaults(4);
    AuthorityConfig authority = AuthorityConfig::defaults(4);
    PriorityConfig priority;
    msg::SanitizeConfig sanitize;
    std::vector<std::uint64_t> token_budgets = {256, 512, 1024, 2048};  // k per layer
    msg::SubgoalTauFn subgoal_tau;  // defaults to "always in scope"
    std::vector<MappingParams> mapping_params;   // per layer
    std::vector<LayerPolicyFn> numeric_policies; // per layer, default tanh
    std::optional<Matrix> initial_state;         // seeded uniform when absent
    bool parallel_policies = false;
    double projection_tol = 1e-9;
    std::size_t projection_max_iter = 1000;

    /// Seeded defaults: one-hot read-out/write-in biases per layer, gated
    /// residual mappings with seeded dynamic parts (so unconstrained runs
    /// actually drift), tanh numeric policies.
    static RuntimeConfig defaults(int layers = 4, int feature_dim = 8,
                                  std::uint64_t seed = 42);

    /// Apply the overridable fields of config/runtime.json on top of *this.
    void apply_json(const Json& j);
};

struct AnomalyRecord {
    std::uint64_t step = 0;
    int layer = 0;
    std::string what;
};

/// The per-step coordination loop: selective activation, typed message
/// routing through the contract projections, caching, authority projection,
/// arbitration and traffic accounting. Owns the layered numeric state and
/// advances it through the mapping stack each step (projected to doubly
/// stochastic residuals in constrained mode). Holds no shared mutable state;
/// a Runtime value may move between threads but not be shared.
class Runtime {
public:
    Runtime(RuntimeConfig cfg, EnvironmentHook* env, std::vector<LayerAgent> agents,
            std::uint64_t seed = 42);

    StepTrace step(const Context& events);

    /// Add `eps` to every entry of the layer's state row (fault injection).
    void perturb_row(int layer, double eps);

    const LayeredState& state() const { return state_; }
    std::uint64_t current_step() const { return t_; }
    const std::vector<AnomalyRecord>& anomalies() const { return anomalies_; }
    const RuntimeConfig& config() const { return cfg_; }

private:
    struct Outbound {
        msg::MessageKind kind;
        int sender = 0;
        std::string bytes;
    };

    LayerDecision invoke_agent(int layer, const LayerView& view);
    void send_point_to_point(StepTrace& trace, msg::MessageKind kind, int sender,
                             int receiver, const Json& raw, bool state_changed);
    void broadcast_policy(StepTrace& trace, const Json& raw, bool state_changed);
    void deliver(int receiver, msg::MessageKind kind, int sender, const std::string& bytes);
    std::string row_bytes(int layer) const;
    void propagate_state(StepTrace& trace, const std::set<int>& active);

    RuntimeConfig cfg_;
    EnvironmentHook* env_ = nullptr;
    std::vector<LayerAgent> agents_;
    LayeredState state_;
    std::uint64_t t_ = 0;
    MessageCache cache_;
    MessageRouting routing_;
    std::vector<std::vector<LayerView::Inbound>> inboxes_;  // staged for next step
    std::map<int, std::string> last_row_bytes_;             // at last activation
    std::vector<AnomalyRecord> anomalies_;
    std::vector<AnomalyRecord> pending_anomalies_;  // attach to next auto-summary
};

}  // namespace ctha
