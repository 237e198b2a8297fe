#include "ctha/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "ctha/rng.hpp"

namespace ctha {

namespace {

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

// Overflow guard for long unconstrained runs: the state explodes by design,
// but it must stay finite and serializable.
constexpr double kStateClamp = 1e100;

}  // namespace

std::string_view mode_name(Mode mode) {
    switch (mode) {
        case Mode::ctha: return "ctha";
        case Mode::unconstrained: return "unconstrained";
        case Mode::single_scale: return "single_scale";
    }
    throw DomainError("unknown mode");
}

Mode mode_from_name(std::string_view name) {
    if (name == "ctha") return Mode::ctha;
    if (name == "unconstrained") return Mode::unconstrained;
    if (name == "single_scale" || name == "single-scale") return Mode::single_scale;
    throw DomainError("unknown mode '" + std::string(name) + "'");
}

ActivationConfig ActivationConfig::defaults(int layers) {
    ActivationConfig cfg;
    cfg.periods.assign(static_cast<std::size_t>(layers), std::nullopt);
    cfg.triggers.assign(static_cast<std::size_t>(layers), {});
    cfg.periods[0] = 1;  // Reflex: every observation
    if (layers >= 2) cfg.periods[1] = 3;
    if (layers >= 3) cfg.triggers[2] = {"goal_completion"};
    if (layers >= 4) cfg.triggers[3] = {"session_boundary"};
    return cfg;
}

void ActivationConfig::check_invariants() const {
    if (periods.empty() || triggers.size() != periods.size())
        throw DomainError("activation config: periods/triggers must cover every layer");
    if (!periods[0] || *periods[0] != 1)
        throw DomainError("activation config: layer 1 must run every observation");
    for (const auto& p : periods)
        if (p && *p < 1) throw DomainError("activation config: periods must be >= 1");
}

ActivationConfig ActivationConfig::from_json(const Json& j) {
    ActivationConfig cfg;
    for (const auto& p : j.at("periods")) {
        if (p.is_null())
            cfg.periods.push_back(std::nullopt);
        else
            cfg.periods.push_back(p.get<std::uint64_t>());
    }
    if (j.contains("triggers")) {
        for (const auto& t : j.at("triggers"))
            cfg.triggers.push_back(t.get<std::set<std::string>>());
    }
    cfg.triggers.resize(cfg.periods.size());
    cfg.check_invariants();
    return cfg;
}

Json ActivationConfig::to_json() const {
    Json periods_j = Json::array();
    for (const auto& p : periods) {
        if (p)
            periods_j.push_back(*p);
        else
            periods_j.push_back(nullptr);
    }
    Json triggers_j = Json::array();
    for (const auto& t : triggers) triggers_j.push_back(t);
    return Json{{"periods", std::move(periods_j)}, {"triggers", std::move(triggers_j)}};
}

bool is_active(int layer, std::uint64_t t, const Context& ctx, const ActivationConfig& cfg) {
    const auto idx = static_cast<std::size_t>(layer - 1);
    if (layer < 1 || idx >= cfg.periods.size())
        throw DomainError("is_active: layer out of range");
    if (cfg.periods[idx] && t % *cfg.periods[idx] == 0) return true;
    for (const auto& trigger : cfg.triggers[idx])
        if (ctx.has_flag(trigger)) return true;
    return false;
}

std::set<std::string> MessageRouting::inbound_channels(int layer) const {
    std::set<std::string> channels;
    if (layer > 1) channels.insert("summary:" + std::to_string(layer - 1));
    if (layer < layers) channels.insert("plan:" + std::to_string(layer + 1));
    if (layer < layers) channels.insert("policy");  // broadcast from the top layer
    return channels;
}

bool can_parallel(int i, int j, const MessageRouting& routes,
                  std::span<const std::set<std::string>> resources) {
    if (i == j) throw DomainError("can_parallel: distinct layers required");
    const auto in_i = routes.inbound_channels(i);
    const auto in_j = routes.inbound_channels(j);
    for (const auto& c : in_i)
        if (in_j.count(c)) return false;
    const auto res_of = [&](int layer) -> const std::set<std::string>* {
        const auto idx = static_cast<std::size_t>(layer - 1);
        return idx < resources.size() ? &resources[idx] : nullptr;
    };
    const auto* ri = res_of(i);
    const auto* rj = res_of(j);
    if (ri && rj)
        for (const auto& r : *ri)
            if (rj->count(r)) return false;
    return true;
}

MessageCache::Fetch MessageCache::fetch(int layer, msg::MessageKind kind, bool state_changed,
                                        const std::function<std::string()>& fresh) {
    const auto key = std::make_pair(layer, kind);
    const auto it = entries_.find(key);
    if (!state_changed && it != entries_.end()) return Fetch{it->second, true};
    Fetch out{fresh(), false};
    entries_[key] = out.bytes;
    return out;
}

std::string cached_message(MessageCache& cache, int layer, msg::MessageKind kind,
                           std::uint64_t /*t*/, bool state_changed,
                           const std::function<std::string()>& fresh) {
    return cache.fetch(layer, kind, state_changed, fresh).bytes;
}

Json StepTrace::to_json() const {
    return Json{{"step", step},
                {"active_layers", active_layers},
                {"messages_sent", messages_sent},
                {"messages_received", messages_received},
                {"comparisons", comparisons},
                {"conflicts", conflicts},
                {"violations_blocked", violations_blocked},
                {"cache_hits", cache_hits},
                {"final_action", final_action.to_json()},
                {"gain_fwd", gain_fwd},
                {"gain_bwd", gain_bwd}};
}

StepTrace StepTrace::from_json(const Json& j) {
    StepTrace t;
    t.step = j.at("step").get<std::uint64_t>();
    t.active_layers = j.at("active_layers").get<std::set<int>>();
    t.messages_sent = j.at("messages_sent").get<std::uint64_t>();
    t.messages_received = j.at("messages_received").get<std::uint64_t>();
    t.comparisons = j.at("comparisons").get<std::uint64_t>();
    t.conflicts = j.at("conflicts").get<std::uint64_t>();
    t.violations_blocked = j.at("violations_blocked").get<std::uint64_t>();
    t.cache_hits = j.at("cache_hits").get<std::uint64_t>();
    t.final_action = ActionProposal::from_json(j.at("final_action"));
    t.gain_fwd = j.at("gain_fwd").get<double>();
    t.gain_bwd = j.at("gain_bwd").get<double>();
    return t;
}

std::pair<std::uint64_t, std::uint64_t> count_traffic(const StepTrace& trace) {
    return {trace.messages_sent + trace.messages_received, trace.comparisons};
}

RuntimeConfig RuntimeConfig::defaults(int layers, int feature_dim, std::uint64_t seed) {
    RuntimeConfig cfg;
    cfg.layers = layers;
    cfg.feature_dim = feature_dim;
    cfg.activation = ActivationConfig::defaults(layers);
    cfg.authority = AuthorityConfig::defaults(layers);
    cfg.priority.alpha.clear();
    for (int l = 1; l <= layers; ++l) cfg.priority.alpha.push_back(0.1 * l);
    cfg.token_budgets.assign(static_cast<std::size_t>(layers), 0);
    const std::uint64_t ladder[4] = {256, 512, 1024, 2048};
    for (int l = 0; l < layers; ++l)
        cfg.token_budgets[static_cast<std::size_t>(l)] = l < 4 ? ladder[l] : 4096;
    cfg.subgoal_tau = [](const Json&) { return 0.0; };

    const auto n = static_cast<std::size_t>(layers);
    const auto d = static_cast<std::size_t>(feature_dim);
    Rng rng(seed);
    for (std::size_t l = 0; l < n; ++l) {
        MappingParams p = MappingParams::neutral(n, d);
        p.b_pre.assign(n, 0.0);
        p.b_pre[l] = 1.0;  // read own stream
        p.b_post.assign(n, 0.0);
        p.b_post[l] = 1.0;  // write own stream
        p.alpha_res = 1.5;
        p.b_res = Matrix(n, n, 0.0);
        for (std::size_t i = 0; i < n; ++i) p.b_res.at(i, i) = 0.25;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) p.theta_res.at(i, j) = rng.uniform(-1.0, 1.0);
        cfg.mapping_params.push_back(std::move(p));
    }
    cfg.numeric_policies.assign(n, [](const Vector& v) {
        Vector out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
        return out;
    });
    return cfg;
}

void RuntimeConfig::apply_json(const Json& j) {
    if (j.contains("mode")) mode = mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("activation")) activation = ActivationConfig::from_json(j.at("activation"));
    if (j.contains("token_budgets"))
        token_budgets = j.at("token_budgets").get<std::vector<std::uint64_t>>();
    if (j.contains("parallel_policies"))
        parallel_policies = j.at("parallel_policies").get<bool>();
    if (j.contains("sanitize")) {
        const auto& s = j.at("sanitize");
        if (s.contains("substrings"))
            sanitize.substrings = s.at("substrings").get<std::vector<std::string>>();
        if (s.contains("prefixes"))
            sanitize.prefixes = s.at("prefixes").get<std::vector<std::string>>();
    }
    if (j.contains("tie_break")) {
        const auto name = j.at("tie_break").get<std::string>();
        priority.tie_break = name == "pseudocode" ? PriorityConfig::TieBreak::pseudocode
                                                  : PriorityConfig::TieBreak::prefer_faster;
    }
}

Runtime::Runtime(RuntimeConfig cfg, EnvironmentHook* env, std::vector<LayerAgent> agents,
                 std::uint64_t seed)
    : cfg_(std::move(cfg)), env_(env), agents_(std::move(agents)) {
    cfg_.activation.check_invariants();
    if (agents_.size() != static_cast<std::size_t>(cfg_.layers))
        throw DomainError("runtime needs one agent per layer");
    routing_.layers = cfg_.layers;
    inboxes_.resize(static_cast<std::size_t>(cfg_.layers));

    const auto n = static_cast<std::size_t>(cfg_.layers);
    const auto d = static_cast<std::size_t>(cfg_.feature_dim);
    if (cfg_.initial_state) {
        if (cfg_.initial_state->rows() != n || cfg_.initial_state->cols() != d)
            throw ShapeError("initial state must be layers x feature_dim");
        state_ = LayeredState{*cfg_.initial_state, 0};
        state_.check_invariants();
    } else {
        state_ = LayeredState{Matrix(n, d), 0};
        Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) state_.rows.at(i, j) = rng.uniform(-1.0, 1.0);
    }
}

std::string Runtime::row_bytes(int layer) const {
    return canonical_encode(Json(state_.rows.row(static_cast<std::size_t>(layer - 1))));
}

void Runtime::deliver(int receiver, msg::MessageKind kind, int sender,
                      const std::string& bytes) {
    if (receiver < 1 || receiver > cfg_.layers) return;
    inboxes_[static_cast<std::size_t>(receiver - 1)].push_back(
        LayerView::Inbound{kind, sender, msg::parse(bytes, kind)});
}

LayerDecision Runtime::invoke_agent(int layer, const LayerView& view) {
    const auto& agent = agents_[static_cast<std::size_t>(layer - 1)];
    if (!agent) return {};
    return agent(view);
}

void Runtime::send_point_to_point(StepTrace& trace, msg::MessageKind kind, int sender,
                                  int receiver, const Json& raw, bool state_changed) {
    const msg::ValidationContext vctx{sender, static_cast<double>(t_)};
    auto fresh = [&]() {
        trace.comparisons += 1;  // schema validation of the outbound message
        if (cfg_.mode != Mode::ctha) return msg::serialize(raw);
        if (kind == msg::MessageKind::summary) {
            const auto budget = cfg_.token_budgets[static_cast<std::size_t>(sender - 1)];
            return msg::serialize(
                msg::project_summary(raw, budget, cfg_.sanitize, vctx).message);
        }
        const double receiver_tau =
            cfg_.authority.manifold_for(receiver).tau;
        return msg::serialize(
            msg::project_plan(raw, receiver_tau, cfg_.subgoal_tau, vctx).message);
    };

    std::string bytes;
    if (cfg_.mode == Mode::ctha && kind == msg::MessageKind::summary) {
        const auto fetched = cache_.fetch(sender, kind, state_changed, fresh);
        if (fetched.hit) trace.cache_hits += 1;
        bytes = fetched.bytes;
    } else {
        bytes = fresh();  // plans are event-driven and never cached
    }
    deliver(receiver, kind, sender, bytes);
    trace.messages_sent += 1;
}

void Runtime::broadcast_policy(StepTrace& trace, const Json& raw, bool state_changed) {
    const int sender = cfg_.layers;
    const msg::ValidationContext vctx{sender, static_cast<double>(t_)};
    auto fresh = [&]() {
        trace.comparisons += 1;
        if (cfg_.mode != Mode::ctha) return msg::serialize(raw);
        return msg::serialize(msg::project_policy(raw, vctx).message);
    };
    std::string bytes;
    if (cfg_.mode == Mode::ctha) {
        const auto fetched =
            cache_.fetch(sender, msg::MessageKind::policy, state_changed, fresh);
        if (fetched.hit) trace.cache_hits += 1;
        bytes = fetched.bytes;
    } else {
        bytes = fresh();
    }
    // One broadcast channel fans out to every lower layer; the per-step
    // accounting books it under schema validation, not typed passing.
    for (int receiver = 1; receiver < cfg_.layers; ++receiver)
        deliver(receiver, msg::MessageKind::policy, sender, bytes);
}

void Runtime::propagate_state(StepTrace& trace, const std::set<int>& active) {
    if (cfg_.mode == Mode::single_scale) {
        // Single-scale loop: s <- s + policy(s) on the lone stream.
        Vector row = state_.rows.row(0);
        const Vector delta = cfg_.numeric_policies[0](row);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += delta[j];
        state_.rows.set_row(0, row);
        state_.step = t_;
        trace.gain_fwd = 1.0;
        trace.gain_bwd = 1.0;
        return;
    }

    std::vector<Matrix> applied;
    for (const int layer : active) {
        const auto idx = static_cast<std::size_t>(layer - 1);
        MappingSet m = compute_mappings(state_, cfg_.mapping_params[idx]);
        if (cfg_.mode == Mode::ctha)
            m.h_res = project_doubly_stochastic(m.h_res, cfg_.projection_tol,
                                                cfg_.projection_max_iter)
                          .matrix;
        state_ = propagate_layer(state_, m, cfg_.numeric_policies[idx]);
        applied.push_back(std::move(m.h_res));
    }
    state_.step = t_;
    for (std::size_t i = 0; i < state_.rows.rows(); ++i)
        for (std::size_t j = 0; j < state_.rows.cols(); ++j) {
            double& v = state_.rows.at(i, j);
            v = std::clamp(v, -kStateClamp, kStateClamp);
        }
    if (!applied.empty()) {
        const auto gain = amax_gain(composite_mapping(applied, 0, applied.size()));
        trace.gain_fwd = gain.fwd;
        trace.gain_bwd = gain.bwd;
    }
}

void Runtime::perturb_row(int layer, double eps) {
    const auto idx = static_cast<std::size_t>(layer - 1);
    if (layer < 1 || idx >= state_.rows.rows()) throw DomainError("perturb_row: bad layer");
    for (std::size_t j = 0; j < state_.rows.cols(); ++j) state_.rows.at(idx, j) += eps;
}

StepTrace Runtime::step(const Context& events) {
    ++t_;
    Context ctx = events;
    ctx.step = t_;

    StepTrace trace;
    trace.step = t_;

    std::set<int> active;
    active.insert(1);  // Reflex runs every step regardless of configuration
    for (int layer = 1; layer <= cfg_.layers; ++layer)
        if (is_active(layer, t_, ctx, cfg_.activation)) active.insert(layer);
    if (cfg_.mode == Mode::single_scale) active = {1};
    trace.active_layers = active;

    // Deliver staged messages and invoke the active layers.
    std::map<int, LayerView> views;
    for (const int layer : active) {
        LayerView view;
        view.layer = layer;
        view.step = t_;
        view.ctx = ctx;
        view.state_row = state_.rows.row(static_cast<std::size_t>(layer - 1));
        auto& inbox = inboxes_[static_cast<std::size_t>(layer - 1)];
        view.inbox = std::move(inbox);
        inbox.clear();
        views.emplace(layer, std::move(view));
    }

    std::map<int, LayerDecision> decisions;
    std::vector<int> order(active.begin(), active.end());
    const bool parallel = cfg_.parallel_policies && order.size() > 1;
    if (parallel) {
        std::vector<std::set<std::string>> declared(static_cast<std::size_t>(cfg_.layers));
        std::vector<std::vector<int>> batches;
        for (const int layer : order) {
            bool placed = false;
            for (auto& batch : batches) {
                const bool compatible =
                    std::all_of(batch.begin(), batch.end(), [&](int other) {
                        return can_parallel(layer, other, routing_, declared);
                    });
                if (compatible) {
                    batch.push_back(layer);
                    placed = true;
                    break;
                }
            }
            if (!placed) batches.push_back({layer});
        }
        for (const auto& batch : batches) {
            std::vector<std::pair<int, std::future<LayerDecision>>> futures;
            for (const int layer : batch)
                futures.emplace_back(layer,
                                     std::async(std::launch::async, [this, layer, &views]() {
                                         return invoke_agent(layer, views.at(layer));
                                     }));
            for (auto& [layer, fut] : futures) {
                try {
                    decisions[layer] = fut.get();
                } catch (const std::exception& e) {
                    pending_anomalies_.push_back({t_, layer, e.what()});
                    anomalies_.push_back({t_, layer, e.what()});
                    decisions[layer] = {};
                }
            }
        }
    } else {
        for (const int layer : order) {
            try {
                decisions[layer] = invoke_agent(layer, views.at(layer));
            } catch (const std::exception& e) {
                pending_anomalies_.push_back({t_, layer, e.what()});
                anomalies_.push_back({t_, layer, e.what()});
                decisions[layer] = {};
            }
        }
    }

    // Outbound typed messages (none in single-scale mode).
    if (cfg_.mode != Mode::single_scale) {
        for (const int layer : order) {
            const LayerDecision& decision = decisions[layer];
            const std::string bytes_now = row_bytes(layer);
            const auto last = last_row_bytes_.find(layer);
            bool state_changed = last == last_row_bytes_.end() || last->second != bytes_now;
            last_row_bytes_[layer] = bytes_now;

            if (layer < cfg_.layers) {
                Json raw;
                if (decision.summary) {
                    raw = *decision.summary;
                    state_changed = true;  // scripted content bypasses the cache
                } else {
                    raw = Json{{"layer_id", layer},
                               {"timestamp", static_cast<double>(t_)},
                               {"state_digest", fnv1a_hex(bytes_now)}};
                    Json anomalies = Json::array();
                    for (const auto& rec : pending_anomalies_)
                        if (rec.layer == layer && anomalies.size() < 3)
                            anomalies.push_back(Json{{"type", "error"},
                                                     {"description",
                                                      msg::utf8_truncate(rec.what, 128)}});
                    if (!anomalies.empty()) {
                        raw["anomalies"] = std::move(anomalies);
                        state_changed = true;
                    }
                }
                send_point_to_point(trace, msg::MessageKind::summary, layer, layer + 1, raw,
                                    state_changed);
            } else {
                const Json raw =
                    decision.policy ? *decision.policy : Json{{"rules", Json::array()}};
                broadcast_policy(trace, raw, state_changed || decision.policy.has_value());
            }

            if (decision.plan && layer > 1)
                send_point_to_point(trace, msg::MessageKind::plan, layer, layer - 1,
                                    *decision.plan, true);
        }
        pending_anomalies_.erase(
            std::remove_if(pending_anomalies_.begin(), pending_anomalies_.end(),
                           [&](const AnomalyRecord& rec) {
                               return active.count(rec.layer) > 0;
                           }),
            pending_anomalies_.end());
    }

    // Proposals, authority projection, arbitration.
    std::vector<ActionProposal> submissions;
    for (const int layer : order) {
        ActionProposal proposal = decisions[layer].proposal
                                      ? *decisions[layer].proposal
                                      : ActionProposal::noop_for(layer);
        try {
            proposal.check_invariants();
        } catch (const std::exception& e) {
            anomalies_.push_back({t_, layer, e.what()});
            proposal = ActionProposal::noop_for(layer);
        }
        if (cfg_.mode == Mode::ctha) {
            const auto& manifold = cfg_.authority.manifold_for(layer);
            ActionProposal projected =
                project_authority(proposal, manifold, cfg_.authority.downgrades_for(layer));
            if (!(projected == proposal)) trace.violations_blocked += 1;
            submissions.push_back(std::move(projected));
            trace.messages_received += 1;  // authority-scoped submission to the arbiter
        } else {
            submissions.push_back(std::move(proposal));
        }
    }

    std::vector<ActionProposal> emitted;
    switch (cfg_.mode) {
        case Mode::ctha: {
            const Resolution res =
                resolve(submissions, ctx, cfg_.priority, cfg_.layers);
            trace.conflicts = res.conflicts.size();
            trace.comparisons += 1;  // arbiter resolution
            trace.final_action = res.final;
            emitted.push_back(res.final);
            break;
        }
        case Mode::unconstrained: {
            emitted = submissions;
            std::uint64_t residual = 0;
            for (std::size_t i = 0; i < emitted.size(); ++i)
                for (std::size_t j = i + 1; j < emitted.size(); ++j)
                    if (detect_conflict(emitted[i], emitted[j])) ++residual;
            trace.conflicts = residual;
            ActionProposal bundle = ActionProposal::noop_for(1);
            bundle.id = "unconstrained_bundle";
            Json members = Json::array();
            for (const auto& a : emitted) members.push_back(a.to_json());
            bundle.payload = std::move(members);
            trace.final_action = std::move(bundle);
            break;
        }
        case Mode::single_scale: {
            trace.final_action = submissions.front();
            emitted.push_back(submissions.front());
            break;
        }
    }

    if (env_) env_->apply(t_, emitted);

    propagate_state(trace, active);

    // The traffic counters follow the per-step accounting taxonomy. In
    // unconstrained mode no typed channels or arbiter exist, so the counters
    // are the simulated broadcast/parsing/conflict totals over the active
    // set; single-scale coordination costs nothing.
    const std::uint64_t a = active.size();
    if (cfg_.mode == Mode::unconstrained) {
        trace.messages_sent = a * (a - 1);
        trace.messages_received = 0;
        trace.comparisons = a * a + a * (a - 1) / 2;
        trace.cache_hits = 0;
        trace.violations_blocked = 0;
    } else if (cfg_.mode == Mode::single_scale) {
        trace.messages_sent = 0;
        trace.messages_received = 0;
        trace.comparisons = 0;
        trace.cache_hits = 0;
        trace.violations_blocked = 0;
        trace.conflicts = 0;
    }
    return trace;
}

}  // namespace ctha
