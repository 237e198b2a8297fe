#pragma once

// Hand-rolled conformance checkers for the three wire formats, written
// field-by-field from the documented bounds. Deliberately independent of the
// library's schema interpreter so a shared bug cannot hide a violation.
// Operates on ASCII content (string limits counted in bytes).

#include <string>

#include "ctha/messages.hpp"

namespace check {

using ctha::Json;

inline bool is_int(const Json& v) {
    if (v.is_number_integer()) return true;
    if (!v.is_number_float()) return false;
    const double d = v.get<double>();
    return d == static_cast<double>(static_cast<long long>(d));
}

inline bool str_max(const Json& v, std::size_t limit) {
    return v.is_string() && v.get_ref<const std::string&>().size() <= limit;
}

inline bool summary_ok(const Json& m) {
    if (!m.is_object()) return false;
    for (auto it = m.begin(); it != m.end(); ++it) {
        const std::string& k = it.key();
        if (k != "layer_id" && k != "timestamp" && k != "state_digest" &&
            k != "observations" && k != "anomalies" && k != "resources")
            return false;
    }
    if (!m.contains("layer_id") || !is_int(m["layer_id"])) return false;
    const double layer = m["layer_id"].get<double>();
    if (layer < 1 || layer > 4) return false;
    if (!m.contains("timestamp") || !m["timestamp"].is_number()) return false;
    if (!m.contains("state_digest") || !str_max(m["state_digest"], 64)) return false;
    if (m.contains("observations")) {
        const auto& obs = m["observations"];
        if (!obs.is_array() || obs.size() > 5) return false;
        for (const auto& o : obs)
            if (!str_max(o, 256)) return false;
    }
    if (m.contains("anomalies")) {
        const auto& an = m["anomalies"];
        if (!an.is_array() || an.size() > 3) return false;
        for (const auto& a : an) {
            if (!a.is_object()) return false;
            if (a.contains("type")) {
                const auto& t = a["type"];
                if (!(t == Json("error") || t == Json("warning") || t == Json("unexpected")))
                    return false;
            }
            if (a.contains("description") && !str_max(a["description"], 128)) return false;
        }
    }
    if (m.contains("resources")) {
        const auto& r = m["resources"];
        if (!r.is_object()) return false;
        if (r.contains("tokens_used") && !is_int(r["tokens_used"])) return false;
        if (r.contains("api_calls") && !is_int(r["api_calls"])) return false;
        if (r.contains("elapsed_seconds") && !r["elapsed_seconds"].is_number()) return false;
    }
    return true;
}

inline bool plan_ok(const Json& m) {
    if (!m.is_object()) return false;
    for (auto it = m.begin(); it != m.end(); ++it) {
        const std::string& k = it.key();
        if (k != "goal_id" && k != "subgoals" && k != "constraints" && k != "priority" &&
            k != "deadline" && k != "rollback")
            return false;
    }
    if (!m.contains("goal_id") || !str_max(m["goal_id"], 32)) return false;
    if (!m.contains("subgoals") || !m["subgoals"].is_array() || m["subgoals"].size() > 10)
        return false;
    for (const auto& g : m["subgoals"]) {
        if (!g.is_object()) return false;
        if (!g.contains("id") || !g["id"].is_string()) return false;
        if (!g.contains("description") || !str_max(g["description"], 256)) return false;
        if (!g.contains("success_criteria") || !str_max(g["success_criteria"], 128))
            return false;
        if (g.contains("dependencies")) {
            if (!g["dependencies"].is_array()) return false;
            for (const auto& dep : g["dependencies"])
                if (!dep.is_string()) return false;
        }
    }
    if (m.contains("constraints")) {
        const auto& cs = m["constraints"];
        if (!cs.is_array() || cs.size() > 5) return false;
        for (const auto& c : cs)
            if (!str_max(c, 128)) return false;
    }
    if (!m.contains("priority") || !m["priority"].is_number()) return false;
    const double priority = m["priority"].get<double>();
    if (priority < 0.0 || priority > 1.0) return false;
    if (m.contains("deadline") && !m["deadline"].is_null() && !is_int(m["deadline"]))
        return false;
    if (m.contains("rollback")) {
        const auto& rb = m["rollback"];
        if (!rb.is_object()) return false;
        if (rb.contains("condition") && !rb["condition"].is_string()) return false;
        if (rb.contains("action")) {
            const auto& a = rb["action"];
            if (!(a == Json("retry") || a == Json("escalate") || a == Json("abort")))
                return false;
        }
    }
    return true;
}

inline bool policy_ok(const Json& m) {
    if (!m.is_object()) return false;
    for (auto it = m.begin(); it != m.end(); ++it) {
        const std::string& k = it.key();
        if (k != "rules" && k != "thresholds" && k != "forbidden" && k != "valid_until")
            return false;
    }
    if (!m.contains("rules") || !m["rules"].is_array() || m["rules"].size() > 20)
        return false;
    for (const auto& r : m["rules"]) {
        if (!r.is_object()) return false;
        if (!r.contains("id") || !r["id"].is_string()) return false;
        if (!r.contains("condition") || !str_max(r["condition"], 256)) return false;
        if (!r.contains("action")) return false;
        const auto& a = r["action"];
        if (!(a == Json("allow") || a == Json("deny") || a == Json("escalate") ||
              a == Json("log")))
            return false;
        if (r.contains("priority")) {
            if (!is_int(r["priority"])) return false;
            const double p = r["priority"].get<double>();
            if (p < 0 || p > 100) return false;
        }
    }
    if (m.contains("thresholds")) {
        const auto& th = m["thresholds"];
        if (!th.is_object()) return false;
        for (auto it = th.begin(); it != th.end(); ++it)
            if (!it.value().is_number()) return false;
    }
    if (m.contains("forbidden")) {
        const auto& fb = m["forbidden"];
        if (!fb.is_array() || fb.size() > 10) return false;
        for (const auto& f : fb)
            if (!str_max(f, 64)) return false;
    }
    if (m.contains("valid_until") && !m["valid_until"].is_null() &&
        !m["valid_until"].is_number())
        return false;
    return true;
}

inline bool ok(const Json& m, ctha::msg::MessageKind kind) {
    switch (kind) {
        case ctha::msg::MessageKind::summary: return summary_ok(m);
        case ctha::msg::MessageKind::plan: return plan_ok(m);
        case ctha::msg::MessageKind::policy: return policy_ok(m);
    }
    return false;
}

}  // namespace check
