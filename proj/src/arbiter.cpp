#include "ctha/arbiter.hpp"

#include <algorithm>

#include "ctha/errors.hpp"

namespace ctha {

void PriorityConfig::check_invariants() const {
    if (alpha.empty()) throw DomainError("priority config needs at least one base priority");
    for (std::size_t i = 1; i < alpha.size(); ++i)
        if (alpha[i] <= alpha[i - 1])
            throw DomainError("base priorities must be strictly increasing in layer index");
    if (!(epsilon > 0.0)) throw DomainError("tie margin epsilon must be positive");
}

PriorityConfig PriorityConfig::from_json(const Json& j) {
    PriorityConfig cfg;
    if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<std::vector<double>>();
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
    if (j.contains("epsilon")) cfg.epsilon = j.at("epsilon").get<double>();
    if (j.contains("tie_break")) {
        const auto name = j.at("tie_break").get<std::string>();
        if (name == "prefer_faster")
            cfg.tie_break = TieBreak::prefer_faster;
        else if (name == "pseudocode")
            cfg.tie_break = TieBreak::pseudocode;
        else
            throw DomainError("unknown tie_break '" + name + "'");
    }
    cfg.check_invariants();
    return cfg;
}

Json PriorityConfig::to_json() const {
    return Json{{"alpha", alpha},
                {"beta", beta},
                {"gamma", gamma},
                {"epsilon", epsilon},
                {"tie_break", tie_break == TieBreak::prefer_faster ? "prefer_faster"
                                                                   : "pseudocode"}};
}

Json Resolution::to_json() const {
    Json pairs = Json::array();
    for (const auto& [i, j] : conflicts) pairs.push_back(Json::array({i, j}));
    return Json{{"final", final.to_json()},
                {"mask", mask},
                {"conflicts", std::move(pairs)},
                {"priorities", priorities}};
}

bool detect_conflict(const ActionProposal& a, const ActionProposal& b) {
    for (const auto& r : a.resources)
        if (b.resources.count(r)) return true;
    for (const auto& e : a.effects) {
        if (!e.empty() && e.front() == '!') {
            if (b.effects.count(e.substr(1))) return true;
        } else if (b.effects.count("!" + e)) {
            return true;
        }
    }
    return false;
}

double priority(const ActionProposal& a, const Context& ctx, const PriorityConfig& cfg) {
    if (a.layer < 1 || static_cast<std::size_t>(a.layer) > cfg.alpha.size())
        throw DomainError("priority: layer " + std::to_string(a.layer) +
                          " outside configured base priorities");
    const double urgency = (ctx.emergency && a.layer == 1) ? 1.0 : a.urgency;
    double rho = cfg.alpha[static_cast<std::size_t>(a.layer - 1)] + cfg.beta * urgency +
                 cfg.gamma * a.confidence;
    if (cfg.learned_hook) rho += cfg.learned_hook(a, ctx);
    return rho;
}

bool is_policy_enforcement(const ActionProposal& a, int institutional_layer) {
    return a.layer == institutional_layer && a.category == ActionCategory::policy_update;
}

namespace {

bool is_reflex_safety(const ActionProposal& a) {
    return a.layer == 1 && (a.category == ActionCategory::error_retry ||
                            a.category == ActionCategory::immediate_response);
}

}  // namespace

Resolution resolve(std::span<const ActionProposal> actions, const Context& ctx,
                   const PriorityConfig& cfg, std::optional<int> institutional_layer) {
    cfg.check_invariants();
    const int top_layer =
        institutional_layer.value_or(static_cast<int>(cfg.alpha.size()));

    Resolution res;
    res.mask.assign(actions.size(), true);
    for (std::size_t i = 0; i < actions.size(); ++i)
        for (std::size_t j = i + 1; j < actions.size(); ++j)
            if (detect_conflict(actions[i], actions[j])) res.conflicts.emplace_back(i, j);

    if (res.conflicts.empty()) {
        res.final = compose(actions);
        return res;  // early exit: no priorities computed
    }

    res.priorities.reserve(actions.size());
    for (const auto& a : actions) res.priorities.push_back(priority(a, ctx, cfg));

    for (const auto& [i, j] : res.conflicts) {
        const ActionProposal& ai = actions[i];
        const ActionProposal& aj = actions[j];

        // Guarantee 3: Institutional policy enforcement wins over anything
        // from a lower layer; in an emergency, Reflex safety actions win over
        // anything non-Institutional.
        if (is_policy_enforcement(ai, top_layer) && aj.layer < top_layer) {
            res.mask[j] = false;
            continue;
        }
        if (is_policy_enforcement(aj, top_layer) && ai.layer < top_layer) {
            res.mask[i] = false;
            continue;
        }
        if (ctx.emergency) {
            if (is_reflex_safety(ai) && aj.layer != top_layer) {
                res.mask[j] = false;
                continue;
            }
            if (is_reflex_safety(aj) && ai.layer != top_layer) {
                res.mask[i] = false;
                continue;
            }
        }

        const double pi = res.priorities[i];
        const double pj = res.priorities[j];
        if (pi > pj + cfg.epsilon) {
            res.mask[j] = false;
        } else if (pj > pi + cfg.epsilon) {
            res.mask[i] = false;
        } else if (cfg.tie_break == PriorityConfig::TieBreak::prefer_faster) {
            res.mask[j] = false;  // faster (lower-index) proposal survives
        } else {
            res.mask[i] = false;
        }
    }

    std::vector<ActionProposal> survivors;
    for (std::size_t i = 0; i < actions.size(); ++i)
        if (res.mask[i]) survivors.push_back(actions[i]);
    res.final = compose(survivors);
    return res;
}

ActionProposal compose(std::span<const ActionProposal> survivors) {
    if (survivors.empty()) return ActionProposal::noop_for(1);
    if (survivors.size() == 1) return survivors.front();

    std::vector<ActionProposal> ordered(survivors.begin(), survivors.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const ActionProposal& a, const ActionProposal& b) {
                         return a.layer < b.layer;
                     });

    for (std::size_t i = 0; i < ordered.size(); ++i)
        for (std::size_t j = i + 1; j < ordered.size(); ++j)
            if (detect_conflict(ordered[i], ordered[j]))
                throw ContractViolation("compose: survivors '" + ordered[i].id + "' and '" +
                                        ordered[j].id + "' conflict");

    ActionProposal out;
    out.id = "composite";
    out.layer = ordered.front().layer;
    out.category = ordered.front().category;  // the fastest action executes first
    out.tau_min = ordered.front().tau_min;
    out.tau_max = ordered.front().tau_max;
    out.confidence = ordered.front().confidence;
    out.urgency = ordered.front().urgency;
    Json members = Json::array();
    for (const auto& a : ordered) {
        out.resources.insert(a.resources.begin(), a.resources.end());
        out.effects.insert(a.effects.begin(), a.effects.end());
        out.tau_min = std::min(out.tau_min, a.tau_min);
        out.tau_max = std::max(out.tau_max, a.tau_max);
        out.confidence = std::min(out.confidence, a.confidence);
        out.urgency = std::max(out.urgency, a.urgency);
        members.push_back(a.to_json());
    }
    out.payload = std::move(members);
    return out;
}

}  // namespace ctha
