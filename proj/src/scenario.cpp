#include "ctha/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctha/rng.hpp"

namespace ctha {

namespace {

/// RFC-4180-style field quoting.
std::string csv_field(const std::string& value) {
    const bool needs_quotes = value.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return value;
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

std::string format_double(double v) {
    // Shortest round-trip form, same as the canonical encoder's.
    return canonical_encode(Json(v));
}

double quantile(std::vector<double> sorted, double p) {
    if (sorted.empty()) return 0.0;
    const auto k = sorted.size();
    const double pos = p * static_cast<double>(k - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, k - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

/// Environment stub that just counts applications; scripted runs exercise
/// coordination, not task semantics.
class RecordingEnvironment final : public EnvironmentHook {
public:
    void apply(std::uint64_t, std::span<const ActionProposal> actions) override {
        applied_ += actions.size();
    }
    std::uint64_t applied() const { return applied_; }

private:
    std::uint64_t applied_ = 0;
};

ActionProposal overreach_proposal(int layer) {
    using C = ActionCategory;
    // One category from each layer's forbidden set in the default tables.
    static const std::map<int, C> kOverreach = {{1, C::plan_revision},
                                                {2, C::policy_update},
                                                {3, C::tool_invocation},
                                                {4, C::immediate_response}};
    ActionProposal a;
    a.id = "overreach_l" + std::to_string(layer);
    a.layer = layer;
    const auto it = kOverreach.find(layer);
    a.category = it != kOverreach.end() ? it->second : C::plan_revision;
    a.tau_min = 0.0;
    a.tau_max = kTauUnbounded;
    a.confidence = 0.9;
    return a;
}

ActionProposal conflicting_proposal(int layer, const std::string& resource) {
    using C = ActionCategory;
    // Stay inside the layer's manifold so the conflict survives authority
    // projection and reaches the arbiter.
    static const std::map<int, C> kInScope = {{1, C::tool_invocation},
                                              {2, C::step_ordering},
                                              {3, C::plan_revision},
                                              {4, C::threshold_tuning}};
    ActionProposal a;
    a.id = "claim_l" + std::to_string(layer);
    a.layer = layer;
    const auto it = kInScope.find(layer);
    a.category = it != kInScope.end() ? it->second : C::noop;
    a.resources = {resource};
    a.tau_min = 0.0;
    a.tau_max = kTauUnbounded;
    a.confidence = 0.8;
    a.urgency = 0.2;
    return a;
}

Json malformed_summary(int layer, std::uint64_t step) {
    Json raw{{"layer_id", layer},
             {"timestamp", static_cast<double>(step)},
             {"state_digest", "fault injection digest"},
             {"observations", Json::array()},
             {"anomalies", Json::array()},
             {"debug_blob", "not part of any contract"}};
    for (int i = 0; i < 7; ++i)
        raw["observations"].push_back("scripted malformed observation " + std::to_string(i));
    raw["anomalies"].push_back(Json{{"type", "ERROR"}, {"description", "forced fault"}});
    return raw;
}

}  // namespace

std::string_view fault_name(FaultKind kind) {
    switch (kind) {
        case FaultKind::perturb: return "perturb";
        case FaultKind::invalid_message: return "invalid_message";
        case FaultKind::authority_overreach: return "authority_overreach";
        case FaultKind::conflict_pair: return "conflict_pair";
    }
    throw DomainError("unknown fault kind");
}

FaultKind fault_from_name(std::string_view name) {
    if (name == "perturb") return FaultKind::perturb;
    if (name == "invalid_message") return FaultKind::invalid_message;
    if (name == "authority_overreach") return FaultKind::authority_overreach;
    if (name == "conflict_pair") return FaultKind::conflict_pair;
    throw DomainError("unknown fault kind '" + std::string(name) + "'");
}

void ScenarioScript::check_invariants() const {
    if (horizon < 1) throw DomainError("scenario horizon must be >= 1");
    if (layers < 1) throw DomainError("scenario needs at least one layer");
    if (feature_dim < 1) throw DomainError("scenario needs at least one feature");
    for (const auto& fault : fault_plan) {
        if (fault.step < 1 || fault.step > horizon)
            throw DomainError("fault step outside horizon");
        if (fault.layer < 1 || fault.layer > layers)
            throw DomainError("fault layer outside hierarchy");
    }
}

ScenarioScript ScenarioScript::from_json(const Json& j) {
    ScenarioScript s;
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    s.horizon = j.at("horizon").get<std::uint64_t>();
    if (j.contains("layers")) s.layers = j.at("layers").get<int>();
    if (j.contains("feature_dim")) s.feature_dim = j.at("feature_dim").get<int>();
    if (j.contains("mode")) s.mode = mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("activation"))
        s.activation = ActivationConfig::from_json(j.at("activation"));
    if (j.contains("events")) {
        for (const auto& e : j.at("events"))
            s.events[e.at("step").get<std::uint64_t>()] =
                e.at("flags").get<std::set<std::string>>();
    }
    if (j.contains("policy_scripts")) {
        for (const auto& ps : j.at("policy_scripts")) {
            const int layer = ps.at("layer").get<int>();
            for (const auto& ej : ps.at("entries")) {
                ScriptEntry entry;
                entry.step = ej.at("step").get<std::uint64_t>();
                if (ej.contains("proposal")) entry.proposal = ej.at("proposal");
                if (ej.contains("summary")) entry.summary = ej.at("summary");
                if (ej.contains("plan")) entry.plan = ej.at("plan");
                if (ej.contains("policy")) entry.policy = ej.at("policy");
                s.policy_scripts[layer].push_back(std::move(entry));
            }
        }
    }
    if (j.contains("fault_plan")) {
        for (const auto& fj : j.at("fault_plan")) {
            Fault f;
            f.step = fj.at("step").get<std::uint64_t>();
            f.layer = fj.at("layer").get<int>();
            f.kind = fault_from_name(fj.at("kind").get<std::string>());
            if (fj.contains("epsilon")) f.epsilon = fj.at("epsilon").get<double>();
            s.fault_plan.push_back(f);
        }
    }
    if (j.contains("subgoal_tau"))
        s.subgoal_tau = j.at("subgoal_tau").get<std::map<std::string, double>>();
    if (j.contains("sanitize")) {
        const auto& sj = j.at("sanitize");
        if (sj.contains("substrings"))
            s.sanitize.substrings = sj.at("substrings").get<std::vector<std::string>>();
        if (sj.contains("prefixes"))
            s.sanitize.prefixes = sj.at("prefixes").get<std::vector<std::string>>();
    }
    s.check_invariants();
    return s;
}

Json ScenarioScript::to_json() const {
    Json j{{"seed", seed},
           {"horizon", horizon},
           {"layers", layers},
           {"feature_dim", feature_dim}};
    if (mode) j["mode"] = std::string(mode_name(*mode));
    if (activation) j["activation"] = activation->to_json();
    if (!events.empty()) {
        Json ev = Json::array();
        for (const auto& [step, flags] : events)
            ev.push_back(Json{{"step", step}, {"flags", flags}});
        j["events"] = std::move(ev);
    }
    if (!policy_scripts.empty()) {
        Json scripts = Json::array();
        for (const auto& [layer, entries] : policy_scripts) {
            Json ej = Json::array();
            for (const auto& entry : entries) {
                Json one{{"step", entry.step}};
                if (entry.proposal) one["proposal"] = *entry.proposal;
                if (entry.summary) one["summary"] = *entry.summary;
                if (entry.plan) one["plan"] = *entry.plan;
                if (entry.policy) one["policy"] = *entry.policy;
                ej.push_back(std::move(one));
            }
            scripts.push_back(Json{{"layer", layer}, {"entries", std::move(ej)}});
        }
        j["policy_scripts"] = std::move(scripts);
    }
    if (!fault_plan.empty()) {
        Json fp = Json::array();
        for (const auto& f : fault_plan) {
            Json one{{"step", f.step},
                     {"layer", f.layer},
                     {"kind", std::string(fault_name(f.kind))}};
            if (f.kind == FaultKind::perturb) one["epsilon"] = f.epsilon;
            fp.push_back(std::move(one));
        }
        j["fault_plan"] = std::move(fp);
    }
    if (!subgoal_tau.empty()) j["subgoal_tau"] = subgoal_tau;
    if (!sanitize.empty())
        j["sanitize"] =
            Json{{"substrings", sanitize.substrings}, {"prefixes", sanitize.prefixes}};
    return j;
}

ScenarioScript ScenarioScript::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open scenario file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_json(canonical_decode(buffer.str()));
}

std::vector<ActionProposal> emitted_proposals(const StepTrace& trace) {
    std::vector<ActionProposal> out;
    const ActionProposal& final = trace.final_action;
    if ((final.id == "unconstrained_bundle" || final.id == "composite") &&
        final.payload.is_array()) {
        for (const auto& member : final.payload)
            out.push_back(ActionProposal::from_json(member));
    } else {
        out.push_back(final);
    }
    return out;
}

Json aggregate_traces(const std::vector<StepTrace>& traces,
                      const AuthorityConfig& authority) {
    const auto steps = traces.size();
    std::uint64_t conflicts = 0, violations_blocked = 0, cache_hits = 0;
    std::uint64_t messages = 0, comparisons = 0;
    std::uint64_t actions_emitted = 0, env_conflict_pairs = 0, env_violations = 0;
    double max_gain_fwd = 0.0, sum_gain_fwd = 0.0;
    std::map<std::string, std::uint64_t> histogram;

    for (const auto& trace : traces) {
        conflicts += trace.conflicts;
        violations_blocked += trace.violations_blocked;
        cache_hits += trace.cache_hits;
        const auto [m, c] = count_traffic(trace);
        messages += m;
        comparisons += c;
        max_gain_fwd = std::max(max_gain_fwd, trace.gain_fwd);
        sum_gain_fwd += trace.gain_fwd;
        histogram[std::to_string(trace.active_layers.size())] += 1;

        const auto emitted = emitted_proposals(trace);
        actions_emitted += emitted.size();
        for (std::size_t i = 0; i < emitted.size(); ++i)
            for (std::size_t j = i + 1; j < emitted.size(); ++j)
                if (detect_conflict(emitted[i], emitted[j])) ++env_conflict_pairs;
        for (const auto& p : emitted) {
            if (p.layer < 1 || p.layer > static_cast<int>(authority.manifolds.size()))
                continue;
            if (!within_authority(p, authority.manifold_for(p.layer))) ++env_violations;
        }
    }

    const double denom = steps == 0 ? 1.0 : static_cast<double>(steps);
    return Json{{"steps", steps},
                {"conflict_total", conflicts},
                {"conflict_rate", static_cast<double>(conflicts) / denom},
                {"violations_blocked_total", violations_blocked},
                {"violations_blocked_rate", static_cast<double>(violations_blocked) / denom},
                {"cache_hits_total", cache_hits},
                {"messages_total", messages},
                {"comparisons_total", comparisons},
                {"actions_emitted_total", actions_emitted},
                {"env_conflict_pairs_total", env_conflict_pairs},
                {"env_violations_total", env_violations},
                {"active_layer_histogram", histogram},
                {"max_gain_fwd", max_gain_fwd},
                {"mean_gain_fwd", sum_gain_fwd / denom}};
}

std::string ExperimentReport::to_jsonl() const {
    std::string out;
    for (const auto& trace : traces) {
        out += canonical_encode(trace.to_json());
        out += "\n";
    }
    out += canonical_encode(Json{{"aggregates", aggregates}});
    out += "\n";
    return out;
}

std::string ExperimentReport::to_csv() const {
    std::string out =
        "step,active_layers,messages_sent,messages_received,comparisons,conflicts,"
        "violations_blocked,cache_hits,gain_fwd,gain_bwd,final_action\n";
    for (const auto& t : traces) {
        std::string layers;
        for (const int l : t.active_layers) {
            if (!layers.empty()) layers += ";";
            layers += std::to_string(l);
        }
        out += std::to_string(t.step) + "," + csv_field(layers) + "," +
               std::to_string(t.messages_sent) + "," + std::to_string(t.messages_received) +
               "," + std::to_string(t.comparisons) + "," + std::to_string(t.conflicts) + "," +
               std::to_string(t.violations_blocked) + "," + std::to_string(t.cache_hits) +
               "," + format_double(t.gain_fwd) + "," + format_double(t.gain_bwd) + "," +
               csv_field(canonical_encode(t.final_action.to_json())) + "\n";
    }
    return out;
}

ExperimentReport run_scenario(const ScenarioScript& script, Mode mode) {
    script.check_invariants();

    RuntimeConfig cfg = RuntimeConfig::defaults(script.layers, script.feature_dim, script.seed);
    cfg.mode = mode;
    if (script.activation) cfg.activation = *script.activation;
    cfg.sanitize = script.sanitize;
    if (!script.subgoal_tau.empty()) {
        const auto taus = script.subgoal_tau;
        cfg.subgoal_tau = [taus](const Json& subgoal) {
            if (subgoal.is_object() && subgoal.contains("id") && subgoal["id"].is_string()) {
                const auto it = taus.find(subgoal["id"].get<std::string>());
                if (it != taus.end()) return it->second;
            }
            return 0.0;
        };
    }

    // Faulted layers must actually run at the faulted step: wire a dedicated
    // flag into the layer's trigger set and raise it from the event stream.
    std::map<std::uint64_t, std::set<std::string>> events = script.events;
    for (const auto& fault : script.fault_plan) {
        if (fault.kind == FaultKind::perturb) continue;
        const std::string flag = "layer_fault:" + std::to_string(fault.layer);
        cfg.activation.triggers[static_cast<std::size_t>(fault.layer - 1)].insert(flag);
        events[fault.step].insert(flag);
        if (fault.kind == FaultKind::conflict_pair) {
            const int partner = fault.layer == script.layers ? fault.layer - 1
                                                             : fault.layer + 1;
            const std::string partner_flag = "layer_fault:" + std::to_string(partner);
            cfg.activation.triggers[static_cast<std::size_t>(partner - 1)].insert(
                partner_flag);
            events[fault.step].insert(partner_flag);
        }
    }

    // Index scripted entries and faults by (layer, step) for the agents.
    std::map<std::pair<int, std::uint64_t>, ScriptEntry> entries;
    for (const auto& [layer, list] : script.policy_scripts)
        for (const auto& entry : list) entries[{layer, entry.step}] = entry;
    std::map<std::pair<int, std::uint64_t>, std::vector<FaultKind>> layer_faults;
    for (const auto& fault : script.fault_plan)
        layer_faults[{fault.layer, fault.step}].push_back(fault.kind);

    const int total_layers = script.layers;
    std::vector<LayerAgent> agents;
    for (int layer = 1; layer <= total_layers; ++layer) {
        agents.push_back([layer, total_layers, entries, layer_faults](const LayerView& view) {
            LayerDecision decision;
            if (const auto it = entries.find({layer, view.step}); it != entries.end()) {
                const ScriptEntry& entry = it->second;
                if (entry.proposal)
                    decision.proposal = ActionProposal::from_json(*entry.proposal);
                decision.summary = entry.summary;
                decision.plan = entry.plan;
                decision.policy = entry.policy;
            }
            if (const auto it = layer_faults.find({layer, view.step});
                it != layer_faults.end()) {
                for (const FaultKind kind : it->second) {
                    switch (kind) {
                        case FaultKind::invalid_message:
                            if (layer < total_layers)
                                decision.summary = malformed_summary(layer, view.step);
                            break;
                        case FaultKind::authority_overreach:
                            decision.proposal = overreach_proposal(layer);
                            break;
                        case FaultKind::conflict_pair:
                            decision.proposal =
                                conflicting_proposal(layer, "resource:shared");
                            break;
                        case FaultKind::perturb: break;  // handled outside the agent
                    }
                }
            }
            // The partner side of a conflict_pair scheduled on the neighbour.
            for (const auto& [key, kinds] : layer_faults) {
                if (key.second != view.step) continue;
                for (const FaultKind kind : kinds) {
                    if (kind != FaultKind::conflict_pair) continue;
                    const int source = key.first;
                    const int partner =
                        source == total_layers ? source - 1 : source + 1;
                    if (partner == layer && source != layer)
                        decision.proposal = conflicting_proposal(layer, "resource:shared");
                }
            }
            return decision;
        });
    }

    RecordingEnvironment env;
    Runtime runtime(std::move(cfg), &env, std::move(agents), script.seed);

    ExperimentReport report;
    for (std::uint64_t t = 1; t <= script.horizon; ++t) {
        for (const auto& fault : script.fault_plan)
            if (fault.kind == FaultKind::perturb && fault.step == t)
                runtime.perturb_row(fault.layer, fault.epsilon);
        Context ctx;
        if (const auto it = events.find(t); it != events.end()) {
            ctx.flags = it->second;
            if (ctx.flags.count("emergency")) ctx.emergency = true;
        }
        report.traces.push_back(runtime.step(ctx));
    }
    report.aggregates = aggregate_traces(report.traces, runtime.config().authority);
    return report;
}

GainCurve gain_experiment(std::size_t depth, std::size_t trials, std::uint64_t seed,
                          const GainDistribution& dist) {
    if (depth < 1) throw DomainError("gain_experiment: depth must be >= 1");
    if (trials < 1) throw DomainError("gain_experiment: trials must be >= 1");

    std::vector<std::vector<double>> unc(depth), con_fwd(depth), con_bwd(depth);
    Rng rng(seed);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        Matrix unc_product, con_product;
        for (std::size_t d = 0; d < depth; ++d) {
            Matrix sample(dist.n, dist.n);
            for (std::size_t i = 0; i < dist.n; ++i)
                for (std::size_t j = 0; j < dist.n; ++j)
                    sample.at(i, j) = rng.uniform(dist.lo, dist.hi);
            unc_product = d == 0 ? sample : sample * unc_product;
            const Matrix projected = project_doubly_stochastic(sample).matrix;
            con_product = d == 0 ? projected : projected * con_product;

            unc[d].push_back(amax_gain(unc_product).fwd);
            const auto g = amax_gain(con_product);
            con_fwd[d].push_back(g.fwd);
            con_bwd[d].push_back(g.bwd);
        }
    }

    GainCurve curve;
    for (std::size_t d = 0; d < depth; ++d) {
        std::sort(unc[d].begin(), unc[d].end());
        std::sort(con_fwd[d].begin(), con_fwd[d].end());
        std::sort(con_bwd[d].begin(), con_bwd[d].end());
        GainCurve::Row row;
        row.depth = d + 1;
        row.unc_median = quantile(unc[d], 0.5);
        row.unc_q25 = quantile(unc[d], 0.25);
        row.unc_q75 = quantile(unc[d], 0.75);
        row.con_median = quantile(con_fwd[d], 0.5);
        row.con_fwd_min = con_fwd[d].front();
        row.con_fwd_max = con_fwd[d].back();
        row.con_bwd_min = con_bwd[d].front();
        row.con_bwd_max = con_bwd[d].back();
        curve.rows.push_back(row);
    }
    return curve;
}

Json GainCurve::to_json() const {
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back(Json{{"depth", r.depth},
                           {"unc_median", r.unc_median},
                           {"unc_q25", r.unc_q25},
                           {"unc_q75", r.unc_q75},
                           {"con_median", r.con_median},
                           {"con_fwd_min", r.con_fwd_min},
                           {"con_fwd_max", r.con_fwd_max},
                           {"con_bwd_min", r.con_bwd_min},
                           {"con_bwd_max", r.con_bwd_max}});
    return arr;
}

std::string GainCurve::to_csv() const {
    std::string out =
        "depth,unc_median,unc_q25,unc_q75,con_median,con_fwd_min,con_fwd_max,"
        "con_bwd_min,con_bwd_max\n";
    for (const auto& r : rows) {
        out += std::to_string(r.depth) + "," + format_double(r.unc_median) + "," +
               format_double(r.unc_q25) + "," + format_double(r.unc_q75) + "," +
               format_double(r.con_median) + "," + format_double(r.con_fwd_min) + "," +
               format_double(r.con_fwd_max) + "," + format_double(r.con_bwd_min) + "," +
               format_double(r.con_bwd_max) + "\n";
    }
    return out;
}

double amplification_experiment(double eps0, std::span<const Matrix> chain) {
    if (!(eps0 > 0.0)) throw DomainError("amplification_experiment: eps0 must be positive");
    ErrorVector eps(chain.size(), 0.0);
    if (!eps.empty()) eps[0] = eps0;
    return propagate_error(eps, chain) / eps0;
}

OverheadTable overhead_experiment(const std::vector<int>& n_range) {
    OverheadTable table;
    for (const int n : n_range) {
        if (n < 1) throw DomainError("overhead_experiment: n must be >= 1");
        for (const Mode mode : {Mode::ctha, Mode::unconstrained, Mode::single_scale}) {
            RuntimeConfig cfg = RuntimeConfig::defaults(n, 4, 7);
            cfg.mode = mode;
            cfg.activation.periods.assign(static_cast<std::size_t>(n), 1);  // all active
            cfg.activation.triggers.assign(static_cast<std::size_t>(n), {});
            RecordingEnvironment env;
            std::vector<LayerAgent> agents(static_cast<std::size_t>(n));
            Runtime runtime(std::move(cfg), &env, std::move(agents), 7);
            const StepTrace trace = runtime.step(Context{});
            const auto [messages, comparisons] = count_traffic(trace);
            table.rows.push_back({n, mode, messages, comparisons});
        }
    }
    return table;
}

Json OverheadTable::to_json() const {
    Json arr = Json::array();
    for (const auto& r : rows)
        arr.push_back(Json{{"n", r.n},
                           {"mode", std::string(mode_name(r.mode))},
                           {"messages", r.messages},
                           {"comparisons", r.comparisons}});
    return arr;
}

std::string OverheadTable::to_csv() const {
    std::string out = "n,mode,messages,comparisons\n";
    for (const auto& r : rows)
        out += std::to_string(r.n) + "," + std::string(mode_name(r.mode)) + "," +
               std::to_string(r.messages) + "," + std::to_string(r.comparisons) + "\n";
    return out;
}

std::map<std::size_t, std::uint64_t> activation_experiment(const ScenarioScript& script,
                                                           std::uint64_t horizon) {
    if (horizon < 1) throw DomainError("activation_experiment: horizon must be >= 1");
    ScenarioScript scoped = script;
    scoped.horizon = horizon;
    const ExperimentReport report =
        run_scenario(scoped, scoped.mode.value_or(Mode::ctha));
    std::map<std::size_t, std::uint64_t> histogram;
    for (const auto& trace : report.traces) histogram[trace.active_layers.size()] += 1;
    return histogram;
}

}  // namespace ctha
