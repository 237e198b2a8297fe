#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctha/encoding.hpp"
#include "ctha/schema.hpp"

namespace ctha::msg {

enum class MessageKind { summary, plan, policy };

std::string_view kind_name(MessageKind kind);
MessageKind kind_from_name(std::string_view name);  // DomainError on unknown

/// Verbatim wire schema text for a kind, as shipped in schemas/.
std::string_view schema_text(MessageKind kind);

/// Parsed wire schema document for a kind.
const Json& schema_doc(MessageKind kind);

enum class ValidationStatus { valid, repaired, defaulted };

std::string_view status_name(ValidationStatus status);

/// Result of pushing a candidate message through validation: the status
/// branch taken, the resulting message (always schema-conformant, whichever
/// branch produced it), and one diagnostic line per correction or violation.
struct ValidationOutcome {
    ValidationStatus status = ValidationStatus::valid;
    Json message;
    std::vector<std::string> diagnostics;
};

/// Deterministic stand-ins for "the sending layer" and "now" in default
/// messages. Callers pass logical values (the runtime uses its step counter
/// as seconds) so identical inputs always give identical outcome bytes.
struct ValidationContext {
    int sender_layer = 1;
    double now_seconds = 0.0;
};

/// The kind's safe fallback message, used when repair cannot recover a
/// candidate: Summary {layer_id, timestamp, state_digest:"DEFAULT"},
/// Plan {goal_id:"noop", subgoals:[], priority:0}, Policy {rules:[]}.
Json default_message(MessageKind kind, const ValidationContext& ctx = {});

/// Deterministic field-level repair, applied in this order: drop fields the
/// schema forbids (additionalProperties: false), clamp numeric ranges,
/// truncate over-long strings at their limit, truncate over-long lists at
/// maxItems, coerce enum-adjacent strings by case-insensitive exact match.
/// Policy rule lists are the one list with a non-prefix eviction rule: the
/// top maxItems rules by (priority descending, id ascending) survive.
/// Returns nullopt when a required field is absent afterwards.
std::optional<Json> repair(const Json& raw, MessageKind kind,
                           std::vector<std::string>* diagnostics = nullptr);

/// Three-branch validation: conformant input passes through as `valid`;
/// repairable input comes back `repaired`; anything else is replaced by the
/// kind's default message as `defaulted`. The outcome message conforms to the
/// kind's schema in every branch.
ValidationOutcome validate(const Json& raw, MessageKind kind,
                           const ValidationContext& ctx = {});

/// Forbidden-content configuration for sanitize: a string is redacted when it
/// contains any of `substrings` or starts with any of `prefixes`.
struct SanitizeConfig {
    std::vector<std::string> substrings;
    std::vector<std::string> prefixes;

    bool empty() const { return substrings.empty() && prefixes.empty(); }
    bool hits(std::string_view text) const;
};

/// Replace every string value (recursively) matching the forbidden-pattern
/// config with "[REDACTED]". Structure is untouched; with no patterns this is
/// the identity.
Json sanitize(const Json& raw, const SanitizeConfig& cfg,
              std::vector<std::string>* diagnostics = nullptr);

/// Token count of a value = number of whitespace-delimited chunks of its
/// canonical serialization. Canonical bytes contain whitespace only inside
/// string values, so a message with space-free strings is exactly one token.
std::size_t token_count(const Json& value);

/// Upward-summary projection: Sanitize, then Truncate to the token budget
/// (observations dropped last-first, then anomalies, then resources, then the
/// digest emptied), then Validate. The outcome serialization never exceeds
/// `token_budget` tokens.
ValidationOutcome project_summary(const Json& raw, std::size_t token_budget,
                                  const SanitizeConfig& cfg = {},
                                  const ValidationContext& ctx = {});

/// Minimum appropriate time scale for a subgoal, supplied by the caller
/// (subgoals carry no time-scale field on the wire).
using SubgoalTauFn = std::function<double(const Json& subgoal)>;

/// Downward-plan projection: validate, then drop every subgoal whose minimum
/// time scale exceeds the receiving layer's, and prune dependencies that no
/// longer resolve to a surviving subgoal id.
ValidationOutcome project_plan(const Json& raw, double receiver_tau,
                               const SubgoalTauFn& tau_min_of,
                               const ValidationContext& ctx = {});

/// Broadcast-policy projection: schema validation and repair only. Policy
/// content is never filtered by lower-layer scope.
ValidationOutcome project_policy(const Json& raw, const ValidationContext& ctx = {});

/// Canonical wire encoding of a message value (sorted keys, compact, UTF-8).
std::string serialize(const Json& message);

/// Parse wire bytes as a candidate message of `kind`. The bytes carry no kind
/// tag, so `kind` selects which schema later validation runs against;
/// malformed text raises ParseError with a byte offset.
Json parse(std::string_view bytes, MessageKind kind);

// ---------------------------------------------------------------------------
// Typed views over the wire formats. Decoding checks the schema first, so a
// populated struct always satisfies the documented bounds.
// ---------------------------------------------------------------------------

struct ResourceUsage {
    std::int64_t tokens_used = 0;
    std::int64_t api_calls = 0;
    double elapsed_seconds = 0.0;
};

struct AnomalyFlag {
    std::string kind;  // wire field "type": error | warning | unexpected
    std::string description;
};

struct SummaryMessage {
    int layer_id = 1;
    double timestamp = 0.0;
    std::string state_digest;
    std::vector<std::string> observations;
    std::vector<AnomalyFlag> anomalies;
    std::optional<ResourceUsage> resources;

    Json to_json() const;
    static SummaryMessage from_json(const Json& j);
};

struct Subgoal {
    std::string id;
    std::string description;
    std::string success_criteria;
    std::vector<std::string> dependencies;  // ids within the same message
};

struct RollbackCondition {
    std::string condition;
    std::string action;  // retry | escalate | abort
};

struct PlanMessage {
    std::string goal_id;
    std::vector<Subgoal> subgoals;
    std::vector<std::string> constraints;
    double priority = 0.0;
    std::optional<std::int64_t> deadline;
    std::optional<RollbackCondition> rollback;

    Json to_json() const;
    static PlanMessage from_json(const Json& j);
};

struct PolicyRule {
    std::string id;
    std::string condition;
    std::string action;  // allow | deny | escalate | log
    std::optional<int> priority;
};

struct PolicyMessage {
    std::vector<PolicyRule> rules;
    std::map<std::string, double> thresholds;
    std::vector<std::string> forbidden;
    std::optional<double> valid_until;

    Json to_json() const;
    static PolicyMessage from_json(const Json& j);
};

}  // namespace ctha::msg
