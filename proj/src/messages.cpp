#include "ctha/messages.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace ctha::msg {

namespace {

// Wire schemas, embedded verbatim; the copies shipped under schemas/ must be
// byte-identical (a test holds the two together).
constexpr std::string_view kSummarySchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "type": "object",
  "required": ["layer_id", "timestamp", "state_digest"],
  "properties": {
    "layer_id": {"type": "integer", "minimum": 1, "maximum": 4},
    "timestamp": {"type": "number"},
    "state_digest": {"type": "string", "maxLength": 64},
    "observations": {
      "type": "array",
      "items": {"type": "string", "maxLength": 256},
      "maxItems": 5
    },
    "anomalies": {
      "type": "array",
      "items": {
        "type": "object",
        "properties": {
          "type": {"enum": ["error", "warning", "unexpected"]},
          "description": {"type": "string", "maxLength": 128}
        }
      },
      "maxItems": 3
    },
    "resources": {
      "type": "object",
      "properties": {
        "tokens_used": {"type": "integer"},
        "api_calls": {"type": "integer"},
        "elapsed_seconds": {"type": "number"}
      }
    }
  },
  "additionalProperties": false
}
)";

constexpr std::string_view kPlanSchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "type": "object",
  "required": ["goal_id", "subgoals", "priority"],
  "properties": {
    "goal_id": {"type": "string", "maxLength": 32},
    "subgoals": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["id", "description", "success_criteria"],
        "properties": {
          "id": {"type": "string"},
          "description": {"type": "string", "maxLength": 256},
          "success_criteria": {"type": "string", "maxLength": 128},
          "dependencies": {"type": "array", "items": {"type": "string"}}
        }
      },
      "maxItems": 10
    },
    "constraints": {
      "type": "array",
      "items": {"type": "string", "maxLength": 128},
      "maxItems": 5
    },
    "priority": {"type": "number", "minimum": 0, "maximum": 1},
    "deadline": {"type": ["integer", "null"]},
    "rollback": {
      "type": "object",
      "properties": {
        "condition": {"type": "string"},
        "action": {"enum": ["retry", "escalate", "abort"]}
      }
    }
  },
  "additionalProperties": false
}
)";

constexpr std::string_view kPolicySchema = R"({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "type": "object",
  "required": ["rules"],
  "properties": {
    "rules": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["id", "condition", "action"],
        "properties": {
          "id": {"type": "string"},
          "condition": {"type": "string", "maxLength": 256},
          "action": {"enum": ["allow", "deny", "escalate", "log"]},
          "priority": {"type": "integer", "minimum": 0, "maximum": 100}
        }
      },
      "maxItems": 20
    },
    "thresholds": {
      "type": "object",
      "additionalProperties": {"type": "number"}
    },
    "forbidden": {
      "type": "array",
      "items": {"type": "string", "maxLength": 64},
      "maxItems": 10
    },
    "valid_until": {"type": ["number", "null"]}
  },
  "additionalProperties": false
}
)";

void note(std::vector<std::string>* diagnostics, std::string line) {
    if (diagnostics) diagnostics->push_back(std::move(line));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// --- repair passes -----------------------------------------------------------
// Each pass walks (value, schema) in lockstep. Passes run in a fixed order so
// repair is deterministic; see the header for the ordering contract.

void drop_unknown(Json& value, const Json& schema, const std::string& path,
                  std::vector<std::string>* diag) {
    if (!schema.is_object()) return;
    if (value.is_object()) {
        const auto props = schema.find("properties");
        const auto additional = schema.find("additionalProperties");
        const bool forbid_extra =
            additional != schema.end() && additional->is_boolean() && !additional->get<bool>();
        if (forbid_extra && props != schema.end()) {
            std::vector<std::string> doomed;
            for (auto it = value.begin(); it != value.end(); ++it)
                if (!props->contains(it.key())) doomed.push_back(it.key());
            for (const auto& key : doomed) {
                value.erase(key);
                note(diag, "dropped unknown field '" + key + "' at " + path);
            }
        }
        if (props != schema.end()) {
            for (auto it = value.begin(); it != value.end(); ++it)
                if (props->contains(it.key()))
                    drop_unknown(it.value(), props->at(it.key()), path + "." + it.key(), diag);
        }
    } else if (value.is_array()) {
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                drop_unknown(value.at(i), *items, path + "[" + std::to_string(i) + "]", diag);
    }
}

void clamp_numbers(Json& value, const Json& schema, const std::string& path,
                   std::vector<std::string>* diag) {
    if (!schema.is_object()) return;
    if (value.is_number()) {
        const double d = value.get<double>();
        double clamped = d;
        if (auto it = schema.find("minimum"); it != schema.end())
            clamped = std::max(clamped, it->get<double>());
        if (auto it = schema.find("maximum"); it != schema.end())
            clamped = std::min(clamped, it->get<double>());
        if (clamped != d) {
            if (value.is_number_integer())
                value = static_cast<std::int64_t>(clamped);
            else
                value = clamped;
            note(diag, "clamped " + path + " to " + value.dump());
        }
    } else if (value.is_object()) {
        if (auto props = schema.find("properties"); props != schema.end())
            for (auto it = value.begin(); it != value.end(); ++it)
                if (props->contains(it.key()))
                    clamp_numbers(it.value(), props->at(it.key()), path + "." + it.key(), diag);
    } else if (value.is_array()) {
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                clamp_numbers(value.at(i), *items, path + "[" + std::to_string(i) + "]", diag);
    }
}

void truncate_strings(Json& value, const Json& schema, const std::string& path,
                      std::vector<std::string>* diag) {
    if (!schema.is_object()) return;
    if (value.is_string()) {
        if (auto it = schema.find("maxLength"); it != schema.end()) {
            const auto limit = it->get<std::size_t>();
            const auto& s = value.get_ref<const std::string&>();
            if (utf8_length(s) > limit) {
                value = utf8_truncate(s, limit);
                note(diag, "truncated string at " + path + " to " + std::to_string(limit) +
                               " chars");
            }
        }
    } else if (value.is_object()) {
        if (auto props = schema.find("properties"); props != schema.end())
            for (auto it = value.begin(); it != value.end(); ++it)
                if (props->contains(it.key()))
                    truncate_strings(it.value(), props->at(it.key()), path + "." + it.key(),
                                     diag);
    } else if (value.is_array()) {
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                truncate_strings(value.at(i), *items, path + "[" + std::to_string(i) + "]",
                                 diag);
    }
}

// Oversized policy rule lists keep the highest-priority rules (ties by id
// ascending) instead of a plain prefix; every other list truncates first-N.
void evict_rules(Json& rules, std::size_t limit, std::vector<std::string>* diag) {
    auto sort_key = [](const Json& rule) {
        double priority = 0.0;
        std::string id;
        if (rule.is_object()) {
            if (auto it = rule.find("priority"); it != rule.end() && it->is_number())
                priority = it->get<double>();
            if (auto it = rule.find("id"); it != rule.end() && it->is_string())
                id = it->get<std::string>();
        }
        return std::pair<double, std::string>(priority, id);
    };
    std::stable_sort(rules.begin(), rules.end(), [&](const Json& a, const Json& b) {
        const auto ka = sort_key(a);
        const auto kb = sort_key(b);
        if (ka.first != kb.first) return ka.first > kb.first;
        return ka.second < kb.second;
    });
    while (rules.size() > limit) rules.erase(rules.size() - 1);
    note(diag, "kept top " + std::to_string(limit) + " rules by priority");
}

void truncate_lists(Json& value, const Json& schema, const std::string& path,
                    MessageKind kind, std::vector<std::string>* diag) {
    if (!schema.is_object()) return;
    if (value.is_array()) {
        if (auto it = schema.find("maxItems"); it != schema.end()) {
            const auto limit = it->get<std::size_t>();
            if (value.size() > limit) {
                if (kind == MessageKind::policy && path == "$.rules") {
                    evict_rules(value, limit, diag);
                } else {
                    while (value.size() > limit) value.erase(value.size() - 1);
                    note(diag, "truncated list at " + path + " to " + std::to_string(limit) +
                                   " items");
                }
            }
        }
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                truncate_lists(value.at(i), *items, path + "[" + std::to_string(i) + "]", kind,
                               diag);
    } else if (value.is_object()) {
        if (auto props = schema.find("properties"); props != schema.end())
            for (auto it = value.begin(); it != value.end(); ++it)
                if (props->contains(it.key()))
                    truncate_lists(it.value(), props->at(it.key()), path + "." + it.key(), kind,
                                   diag);
    }
}

void coerce_enums(Json& value, const Json& schema, const std::string& path,
                  std::vector<std::string>* diag) {
    if (!schema.is_object()) return;
    if (value.is_string()) {
        if (auto en = schema.find("enum"); en != schema.end()) {
            bool exact = false;
            for (const auto& candidate : *en)
                if (candidate == value) {
                    exact = true;
                    break;
                }
            if (!exact) {
                const std::string folded = lower(value.get_ref<const std::string&>());
                for (const auto& candidate : *en) {
                    if (candidate.is_string() &&
                        lower(candidate.get_ref<const std::string&>()) == folded) {
                        value = candidate;
                        note(diag, "coerced enum at " + path + " to " + candidate.dump());
                        break;
                    }
                }
            }
        }
    } else if (value.is_object()) {
        if (auto props = schema.find("properties"); props != schema.end())
            for (auto it = value.begin(); it != value.end(); ++it)
                if (props->contains(it.key()))
                    coerce_enums(it.value(), props->at(it.key()), path + "." + it.key(), diag);
    } else if (value.is_array()) {
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                coerce_enums(value.at(i), *items, path + "[" + std::to_string(i) + "]", diag);
    }
}

// Required fields are never synthesized; a missing one fails the repair.
bool required_satisfied(const Json& value, const Json& schema, const std::string& path,
                        std::vector<std::string>* diag) {
    if (!schema.is_object()) return true;
    if (auto req = schema.find("required"); req != schema.end()) {
        if (!value.is_object()) {
            note(diag, path + ": not an object, required fields unsatisfiable");
            return false;
        }
        for (const auto& name : *req) {
            const auto& key = name.get_ref<const std::string&>();
            if (!value.contains(key)) {
                note(diag, path + ": required field '" + key + "' absent, not synthesizable");
                return false;
            }
        }
    }
    bool ok = true;
    if (value.is_object()) {
        if (auto props = schema.find("properties"); props != schema.end())
            for (auto it = value.begin(); it != value.end(); ++it)
                if (props->contains(it.key()))
                    ok = required_satisfied(it.value(), props->at(it.key()),
                                            path + "." + it.key(), diag) &&
                         ok;
    } else if (value.is_array()) {
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                ok = required_satisfied(value.at(i), *items, path + "[" + std::to_string(i) + "]",
                                        diag) &&
                     ok;
    }
    return ok;
}

}  // namespace

std::string_view kind_name(MessageKind kind) {
    switch (kind) {
        case MessageKind::summary: return "summary";
        case MessageKind::plan: return "plan";
        case MessageKind::policy: return "policy";
    }
    throw DomainError("unknown message kind");
}

MessageKind kind_from_name(std::string_view name) {
    if (name == "summary") return MessageKind::summary;
    if (name == "plan") return MessageKind::plan;
    if (name == "policy") return MessageKind::policy;
    throw DomainError("unknown message kind '" + std::string(name) + "'");
}

std::string_view schema_text(MessageKind kind) {
    switch (kind) {
        case MessageKind::summary: return kSummarySchema;
        case MessageKind::plan: return kPlanSchema;
        case MessageKind::policy: return kPolicySchema;
    }
    throw DomainError("unknown message kind");
}

const Json& schema_doc(MessageKind kind) {
    static const Json summary = Json::parse(kSummarySchema);
    static const Json plan = Json::parse(kPlanSchema);
    static const Json policy = Json::parse(kPolicySchema);
    switch (kind) {
        case MessageKind::summary: return summary;
        case MessageKind::plan: return plan;
        case MessageKind::policy: return policy;
    }
    throw DomainError("unknown message kind");
}

std::string_view status_name(ValidationStatus status) {
    switch (status) {
        case ValidationStatus::valid: return "valid";
        case ValidationStatus::repaired: return "repaired";
        case ValidationStatus::defaulted: return "defaulted";
    }
    throw DomainError("unknown validation status");
}

Json default_message(MessageKind kind, const ValidationContext& ctx) {
    switch (kind) {
        case MessageKind::summary:
            return Json{{"layer_id", ctx.sender_layer},
                        {"timestamp", ctx.now_seconds},
                        {"state_digest", "DEFAULT"}};
        case MessageKind::plan:
            return Json{{"goal_id", "noop"}, {"subgoals", Json::array()}, {"priority", 0}};
        case MessageKind::policy:
            return Json{{"rules", Json::array()}};
    }
    throw DomainError("unknown message kind");
}

std::optional<Json> repair(const Json& raw, MessageKind kind,
                           std::vector<std::string>* diagnostics) {
    const Json& schema = schema_doc(kind);
    Json work = raw;
    drop_unknown(work, schema, "$", diagnostics);
    clamp_numbers(work, schema, "$", diagnostics);
    truncate_strings(work, schema, "$", diagnostics);
    truncate_lists(work, schema, "$", kind, diagnostics);
    coerce_enums(work, schema, "$", diagnostics);
    if (!required_satisfied(work, schema, "$", diagnostics)) return std::nullopt;
    return work;
}

ValidationOutcome validate(const Json& raw, MessageKind kind, const ValidationContext& ctx) {
    const Json& schema = schema_doc(kind);
    ValidationOutcome out;
    auto violations = schema_violations(raw, schema);
    if (violations.empty()) {
        out.status = ValidationStatus::valid;
        out.message = raw;
        return out;
    }
    out.diagnostics = std::move(violations);
    if (auto fixed = repair(raw, kind, &out.diagnostics);
        fixed && matches_schema(*fixed, schema)) {
        out.status = ValidationStatus::repaired;
        out.message = std::move(*fixed);
        return out;
    }
    out.status = ValidationStatus::defaulted;
    out.message = default_message(kind, ctx);
    out.diagnostics.push_back("fell back to default " + std::string(kind_name(kind)) +
                              " message");
    return out;
}

bool SanitizeConfig::hits(std::string_view text) const {
    for (const auto& sub : substrings)
        if (!sub.empty() && text.find(sub) != std::string_view::npos) return true;
    for (const auto& prefix : prefixes)
        if (!prefix.empty() && text.substr(0, prefix.size()) == prefix) return true;
    return false;
}

namespace {

void sanitize_in_place(Json& value, const SanitizeConfig& cfg, const std::string& path,
                       std::vector<std::string>* diag) {
    if (value.is_string()) {
        if (cfg.hits(value.get_ref<const std::string&>())) {
            value = "[REDACTED]";
            note(diag, "redacted forbidden content at " + path);
        }
    } else if (value.is_object()) {
        for (auto it = value.begin(); it != value.end(); ++it)
            sanitize_in_place(it.value(), cfg, path + "." + it.key(), diag);
    } else if (value.is_array()) {
        for (std::size_t i = 0; i < value.size(); ++i)
            sanitize_in_place(value.at(i), cfg, path + "[" + std::to_string(i) + "]", diag);
    }
}

}  // namespace

Json sanitize(const Json& raw, const SanitizeConfig& cfg,
              std::vector<std::string>* diagnostics) {
    if (cfg.empty()) return raw;
    Json work = raw;
    sanitize_in_place(work, cfg, "$", diagnostics);
    return work;
}

std::size_t token_count(const Json& value) {
    const std::string bytes = canonical_encode(value);
    std::size_t tokens = 0;
    bool in_token = false;
    for (char c : bytes) {
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_token) ++tokens;
        in_token = !ws;
    }
    return tokens;
}

ValidationOutcome project_summary(const Json& raw, std::size_t token_budget,
                                  const SanitizeConfig& cfg, const ValidationContext& ctx) {
    if (token_budget < 1) throw DomainError("project_summary: token budget must be >= 1");

    std::vector<std::string> pre_diags;
    Json work = sanitize(raw, cfg, &pre_diags);

    const auto over_budget = [&]() { return token_count(work) > token_budget; };
    if (work.is_object()) {
        // Shed optional content last-first until the serialization fits; the
        // required trio alone always serializes whitespace-free, so any
        // budget >= 1 token is reachable.
        for (const char* list_field : {"observations", "anomalies"}) {
            if (auto it = work.find(list_field); it != work.end() && it->is_array()) {
                while (over_budget() && !it->empty()) {
                    it->erase(it->size() - 1);
                    pre_diags.push_back(std::string("dropped trailing ") + list_field +
                                        " entry for token budget");
                }
            }
        }
        if (over_budget() && work.contains("resources")) {
            work.erase("resources");
            pre_diags.push_back("dropped resources for token budget");
        }
        if (over_budget() && work.contains("state_digest") &&
            work["state_digest"].is_string() &&
            !work["state_digest"].get_ref<const std::string&>().empty()) {
            work["state_digest"] = "";
            pre_diags.push_back("emptied state_digest for token budget");
        }
    }

    ValidationOutcome out = validate(work, MessageKind::summary, ctx);
    if (!pre_diags.empty() && out.status == ValidationStatus::valid)
        out.status = ValidationStatus::repaired;
    out.diagnostics.insert(out.diagnostics.begin(), pre_diags.begin(), pre_diags.end());
    return out;
}

ValidationOutcome project_plan(const Json& raw, double receiver_tau,
                               const SubgoalTauFn& tau_min_of, const ValidationContext& ctx) {
    if (receiver_tau <= 0.0) throw DomainError("project_plan: receiver_tau must be positive");
    if (!tau_min_of) throw DomainError("project_plan: tau_min_of hook required");

    ValidationOutcome out = validate(raw, MessageKind::plan, ctx);
    if (out.status == ValidationStatus::defaulted) return out;

    auto& subgoals = out.message["subgoals"];
    Json kept = Json::array();
    std::vector<std::string> kept_ids;
    bool filtered = false;
    for (const auto& subgoal : subgoals) {
        if (tau_min_of(subgoal) <= receiver_tau) {
            kept.push_back(subgoal);
            if (subgoal.is_object() && subgoal.contains("id") && subgoal["id"].is_string())
                kept_ids.push_back(subgoal["id"].get<std::string>());
        } else {
            filtered = true;
            std::string id = subgoal.is_object() && subgoal.contains("id")
                                 ? subgoal["id"].dump()
                                 : std::string("<anonymous>");
            out.diagnostics.push_back("removed subgoal " + id +
                                      " beyond receiver time scale");
        }
    }
    // Surviving subgoals may not reference anything that is gone.
    for (auto& subgoal : kept) {
        if (!subgoal.is_object() || !subgoal.contains("dependencies")) continue;
        auto& deps = subgoal["dependencies"];
        if (!deps.is_array()) continue;
        Json pruned = Json::array();
        for (const auto& dep : deps) {
            const bool resolves =
                dep.is_string() && std::find(kept_ids.begin(), kept_ids.end(),
                                             dep.get<std::string>()) != kept_ids.end();
            if (resolves)
                pruned.push_back(dep);
            else {
                filtered = true;
                out.diagnostics.push_back("dropped dangling dependency " + dep.dump());
            }
        }
        deps = std::move(pruned);
    }
    if (filtered) {
        subgoals = std::move(kept);
        out.status = ValidationStatus::repaired;
    }
    return out;
}

ValidationOutcome project_policy(const Json& raw, const ValidationContext& ctx) {
    return validate(raw, MessageKind::policy, ctx);
}

std::string serialize(const Json& message) { return canonical_encode(message); }

Json parse(std::string_view bytes, MessageKind kind) {
    switch (kind) {
        case MessageKind::summary:
        case MessageKind::plan:
        case MessageKind::policy: break;
        default: throw DomainError("parse: unknown message kind");
    }
    return canonical_decode(bytes);
}

// --- typed views -------------------------------------------------------------

Json SummaryMessage::to_json() const {
    Json j{{"layer_id", layer_id}, {"timestamp", timestamp}, {"state_digest", state_digest}};
    if (!observations.empty()) j["observations"] = observations;
    if (!anomalies.empty()) {
        Json arr = Json::array();
        for (const auto& a : anomalies)
            arr.push_back(Json{{"type", a.kind}, {"description", a.description}});
        j["anomalies"] = std::move(arr);
    }
    if (resources) {
        j["resources"] = Json{{"tokens_used", resources->tokens_used},
                              {"api_calls", resources->api_calls},
                              {"elapsed_seconds", resources->elapsed_seconds}};
    }
    return j;
}

SummaryMessage SummaryMessage::from_json(const Json& j) {
    if (!matches_schema(j, schema_doc(MessageKind::summary)))
        throw DomainError("summary message does not satisfy its schema");
    SummaryMessage m;
    m.layer_id = static_cast<int>(j.at("layer_id").get<double>());
    m.timestamp = j.at("timestamp").get<double>();
    m.state_digest = j.at("state_digest").get<std::string>();
    if (j.contains("observations"))
        m.observations = j.at("observations").get<std::vector<std::string>>();
    if (j.contains("anomalies")) {
        for (const auto& a : j.at("anomalies")) {
            AnomalyFlag flag;
            if (a.contains("type")) flag.kind = a.at("type").get<std::string>();
            if (a.contains("description"))
                flag.description = a.at("description").get<std::string>();
            m.anomalies.push_back(std::move(flag));
        }
    }
    if (j.contains("resources")) {
        const auto& r = j.at("resources");
        ResourceUsage usage;
        if (r.contains("tokens_used"))
            usage.tokens_used = static_cast<std::int64_t>(r.at("tokens_used").get<double>());
        if (r.contains("api_calls"))
            usage.api_calls = static_cast<std::int64_t>(r.at("api_calls").get<double>());
        if (r.contains("elapsed_seconds"))
            usage.elapsed_seconds = r.at("elapsed_seconds").get<double>();
        m.resources = usage;
    }
    return m;
}

Json PlanMessage::to_json() const {
    Json sg = Json::array();
    for (const auto& g : subgoals) {
        Json item{{"id", g.id},
                  {"description", g.description},
                  {"success_criteria", g.success_criteria}};
        if (!g.dependencies.empty()) item["dependencies"] = g.dependencies;
        sg.push_back(std::move(item));
    }
    Json j{{"goal_id", goal_id}, {"subgoals", std::move(sg)}, {"priority", priority}};
    if (!constraints.empty()) j["constraints"] = constraints;
    if (deadline) j["deadline"] = *deadline;
    if (rollback)
        j["rollback"] = Json{{"condition", rollback->condition}, {"action", rollback->action}};
    return j;
}

PlanMessage PlanMessage::from_json(const Json& j) {
    if (!matches_schema(j, schema_doc(MessageKind::plan)))
        throw DomainError("plan message does not satisfy its schema");
    PlanMessage m;
    m.goal_id = j.at("goal_id").get<std::string>();
    for (const auto& g : j.at("subgoals")) {
        Subgoal sub;
        sub.id = g.at("id").get<std::string>();
        sub.description = g.at("description").get<std::string>();
        sub.success_criteria = g.at("success_criteria").get<std::string>();
        if (g.contains("dependencies"))
            sub.dependencies = g.at("dependencies").get<std::vector<std::string>>();
        m.subgoals.push_back(std::move(sub));
    }
    if (j.contains("constraints"))
        m.constraints = j.at("constraints").get<std::vector<std::string>>();
    m.priority = j.at("priority").get<double>();
    if (j.contains("deadline") && !j.at("deadline").is_null())
        m.deadline = static_cast<std::int64_t>(j.at("deadline").get<double>());
    if (j.contains("rollback")) {
        RollbackCondition rb;
        const auto& r = j.at("rollback");
        if (r.contains("condition")) rb.condition = r.at("condition").get<std::string>();
        if (r.contains("action")) rb.action = r.at("action").get<std::string>();
        m.rollback = std::move(rb);
    }
    return m;
}

Json PolicyMessage::to_json() const {
    Json rj = Json::array();
    for (const auto& r : rules) {
        Json item{{"id", r.id}, {"condition", r.condition}, {"action", r.action}};
        if (r.priority) item["priority"] = *r.priority;
        rj.push_back(std::move(item));
    }
    Json j{{"rules", std::move(rj)}};
    if (!thresholds.empty()) j["thresholds"] = thresholds;
    if (!forbidden.empty()) j["forbidden"] = forbidden;
    if (valid_until) j["valid_until"] = *valid_until;
    return j;
}

PolicyMessage PolicyMessage::from_json(const Json& j) {
    if (!matches_schema(j, schema_doc(MessageKind::policy)))
        throw DomainError("policy message does not satisfy its schema");
    PolicyMessage m;
    for (const auto& r : j.at("rules")) {
        PolicyRule rule;
        rule.id = r.at("id").get<std::string>();
        rule.condition = r.at("condition").get<std::string>();
        rule.action = r.at("action").get<std::string>();
        if (r.contains("priority"))
            rule.priority = static_cast<int>(r.at("priority").get<double>());
        m.rules.push_back(std::move(rule));
    }
    if (j.contains("thresholds"))
        m.thresholds = j.at("thresholds").get<std::map<std::string, double>>();
    if (j.contains("forbidden"))
        m.forbidden = j.at("forbidden").get<std::vector<std::string>>();
    if (j.contains("valid_until") && !j.at("valid_until").is_null())
        m.valid_until = j.at("valid_until").get<double>();
    return m;
}

}  // namespace ctha::msg
