#include "ctha/authority.hpp"

#include <array>
#include <cmath>

#include "ctha/errors.hpp"

namespace ctha {

namespace {

constexpr std::array<std::string_view, 17> kCategoryNames = {
    "tool_invocation",   "parameter_selection", "error_retry",
    "immediate_response", "step_ordering",      "local_optimization",
    "memory_update",     "subtask_split",       "plan_revision",
    "goal_decomposition", "resource_allocation", "deadline_setting",
    "policy_update",     "threshold_tuning",    "constraint_modification",
    "meta_learning",     "noop",
};

std::set<ActionCategory> cats(std::initializer_list<ActionCategory> list) {
    return std::set<ActionCategory>(list);
}

}  // namespace

std::string_view category_name(ActionCategory category) {
    const auto idx = static_cast<std::size_t>(category);
    if (idx >= kCategoryNames.size()) throw DomainError("unknown action category");
    return kCategoryNames[idx];
}

ActionCategory category_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
        if (kCategoryNames[i] == name) return static_cast<ActionCategory>(i);
    throw DomainError("unknown action category '" + std::string(name) + "'");
}

const std::vector<ActionCategory>& all_categories() {
    static const std::vector<ActionCategory> all = [] {
        std::vector<ActionCategory> v;
        for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
            v.push_back(static_cast<ActionCategory>(i));
        return v;
    }();
    return all;
}

void ActionProposal::check_invariants() const {
    if (!(tau_min >= 0.0) || !(tau_max >= tau_min))
        throw DomainError("proposal time band requires 0 <= tau_min <= tau_max");
    if (confidence < 0.0 || confidence > 1.0)
        throw DomainError("proposal confidence outside [0,1]");
    if (urgency < 0.0 || urgency > 1.0) throw DomainError("proposal urgency outside [0,1]");
    for (const auto& token : effects) {
        if (!token.empty() && token.front() == '!' && effects.count(token.substr(1)))
            throw DomainError("proposal asserts both '" + token.substr(1) + "' and '" +
                              token + "'");
    }
}

ActionProposal ActionProposal::noop_for(int layer) {
    ActionProposal a;
    a.id = "noop";
    a.layer = layer;
    a.category = ActionCategory::noop;
    a.tau_min = 0.0;
    a.tau_max = kTauUnbounded;
    a.confidence = 1.0;
    a.urgency = 0.0;
    a.payload = nullptr;
    return a;
}

Json ActionProposal::to_json() const {
    return Json{{"id", id},
                {"layer", layer},
                {"category", std::string(category_name(category))},
                {"resources", resources},
                {"effects", effects},
                {"tau_min", tau_min},
                {"tau_max", tau_max},
                {"confidence", confidence},
                {"urgency", urgency},
                {"payload", payload}};
}

ActionProposal ActionProposal::from_json(const Json& j) {
    ActionProposal a;
    a.id = j.at("id").get<std::string>();
    a.layer = j.at("layer").get<int>();
    a.category = category_from_name(j.at("category").get<std::string>());
    a.resources = j.at("resources").get<std::set<std::string>>();
    a.effects = j.at("effects").get<std::set<std::string>>();
    a.tau_min = j.at("tau_min").get<double>();
    a.tau_max = j.at("tau_max").get<double>();
    a.confidence = j.at("confidence").get<double>();
    a.urgency = j.at("urgency").get<double>();
    if (j.contains("payload")) a.payload = j.at("payload");
    a.check_invariants();
    return a;
}

void AuthorityManifold::check_invariants() const {
    for (const auto c : permitted)
        if (forbidden.count(c))
            throw DomainError("manifold for layer " + std::to_string(layer) +
                              " lists category '" + std::string(category_name(c)) +
                              "' as both permitted and forbidden");
    if (!permitted.count(ActionCategory::noop))
        throw DomainError("noop must be permitted at every layer");
    if (!(tau > 0.0)) throw DomainError("manifold tau must be positive");
}

AuthorityConfig AuthorityConfig::defaults(int layers) {
    using C = ActionCategory;
    AuthorityConfig cfg;

    AuthorityManifold reflex;
    reflex.layer = 1;
    reflex.tau = 0.1;
    reflex.permitted = cats({C::tool_invocation, C::parameter_selection, C::error_retry,
                             C::immediate_response, C::noop});
    reflex.forbidden = cats({C::goal_decomposition, C::plan_revision, C::resource_allocation,
                             C::policy_update});

    AuthorityManifold tactical;
    tactical.layer = 2;
    tactical.tau = 10.0;
    tactical.permitted = cats({C::step_ordering, C::local_optimization, C::memory_update,
                               C::subtask_split, C::noop});
    tactical.forbidden = cats({C::plan_revision, C::goal_decomposition, C::policy_update,
                               C::constraint_modification, C::resource_allocation});

    AuthorityManifold strategic;
    strategic.layer = 3;
    strategic.tau = 600.0;
    strategic.permitted = cats({C::plan_revision, C::goal_decomposition,
                                C::resource_allocation, C::deadline_setting, C::noop});
    strategic.forbidden =
        cats({C::tool_invocation, C::policy_update, C::constraint_modification});

    AuthorityManifold institutional;
    institutional.layer = 4;
    institutional.tau = 86400.0;
    institutional.permitted = cats({C::policy_update, C::threshold_tuning,
                                    C::constraint_modification, C::meta_learning, C::noop});
    institutional.forbidden = cats({C::tool_invocation, C::step_ordering,
                                    C::local_optimization, C::immediate_response});

    cfg.manifolds = {reflex, tactical, strategic, institutional};

    // Extra layers (traffic experiments sweep n up to 8) get permissive
    // manifolds on a geometrically extended time ladder.
    for (int l = 5; l <= layers; ++l) {
        AuthorityManifold extra;
        extra.layer = l;
        extra.tau = 86400.0 * std::pow(144.0, l - 4);
        for (const auto c : all_categories()) extra.permitted.insert(c);
        cfg.manifolds.push_back(std::move(extra));
    }
    if (layers < static_cast<int>(cfg.manifolds.size()))
        cfg.manifolds.resize(static_cast<std::size_t>(layers));

    cfg.downgrades[2] = DowngradeMap{{C::plan_revision, C::subtask_split}};
    for (const auto& man : cfg.manifolds) man.check_invariants();
    return cfg;
}

AuthorityConfig AuthorityConfig::from_json(const Json& j) {
    AuthorityConfig cfg;
    for (const auto& mj : j.at("layers")) {
        AuthorityManifold man;
        man.layer = mj.at("layer").get<int>();
        man.tau = mj.at("tau").get<double>();
        for (const auto& name : mj.at("permitted"))
            man.permitted.insert(category_from_name(name.get<std::string>()));
        if (mj.contains("forbidden"))
            for (const auto& name : mj.at("forbidden"))
                man.forbidden.insert(category_from_name(name.get<std::string>()));
        man.check_invariants();
        cfg.manifolds.push_back(std::move(man));
    }
    if (j.contains("downgrades")) {
        for (const auto& dj : j.at("downgrades")) {
            const int layer = dj.at("layer").get<int>();
            cfg.downgrades[layer][category_from_name(dj.at("from").get<std::string>())] =
                category_from_name(dj.at("to").get<std::string>());
        }
    }
    return cfg;
}

Json AuthorityConfig::to_json() const {
    Json layers = Json::array();
    for (const auto& man : manifolds) {
        Json permitted = Json::array();
        for (const auto c : man.permitted) permitted.push_back(std::string(category_name(c)));
        Json forbidden = Json::array();
        for (const auto c : man.forbidden) forbidden.push_back(std::string(category_name(c)));
        layers.push_back(Json{{"layer", man.layer},
                              {"tau", man.tau},
                              {"permitted", std::move(permitted)},
                              {"forbidden", std::move(forbidden)}});
    }
    Json downgrade_list = Json::array();
    for (const auto& [layer, map] : downgrades)
        for (const auto& [from, to] : map)
            downgrade_list.push_back(Json{{"layer", layer},
                                          {"from", std::string(category_name(from))},
                                          {"to", std::string(category_name(to))}});
    return Json{{"layers", std::move(layers)}, {"downgrades", std::move(downgrade_list)}};
}

const AuthorityManifold& AuthorityConfig::manifold_for(int layer) const {
    for (const auto& man : manifolds)
        if (man.layer == layer) return man;
    throw DomainError("no authority manifold for layer " + std::to_string(layer));
}

const DowngradeMap* AuthorityConfig::downgrades_for(int layer) const {
    const auto it = downgrades.find(layer);
    return it == downgrades.end() ? nullptr : &it->second;
}

bool within_authority(const ActionProposal& a, const AuthorityManifold& man) {
    const bool tau_ok = a.tau_min <= man.tau && man.tau <= a.tau_max;
    return tau_ok && man.permitted.count(a.category) > 0;
}

ActionProposal project_authority(const ActionProposal& a, const AuthorityManifold& man,
                                 const DowngradeMap* downgrades) {
    if (within_authority(a, man)) return a;
    if (!man.permitted.count(a.category) && downgrades) {
        if (const auto it = downgrades->find(a.category); it != downgrades->end()) {
            ActionProposal substituted = a;
            substituted.category = it->second;
            if (within_authority(substituted, man)) return substituted;
        }
    }
    return ActionProposal::noop_for(a.layer);
}

VerifierHook default_verifier(const AuthorityConfig& cfg) {
    return [cfg](const ActionProposal& a, int layer) {
        return within_authority(a, cfg.manifold_for(layer)) ? 1.0 : 0.0;
    };
}

double verify(const ActionProposal& a, int layer, const VerifierHook& hook) {
    if (!hook) throw DomainError("verify: hook must be total");
    const double score = hook(a, layer);
    if (!(score >= 0.0 && score <= 1.0))
        throw ContractViolation("verifier hook returned " + std::to_string(score) +
                                ", outside [0,1]");
    return score;
}

}  // namespace ctha
