#include "ctha/arbiter.hpp"

#include <algorithm>

#include "ctha/rng.hpp"
#include "support/fuzz.hpp"

#include "doctest.h"

using namespace ctha;

namespace {

ActionProposal proposal(int layer, const std::string& id,
                        std::set<std::string> resources = {},
                        std::set<std::string> effects = {}) {
    ActionProposal a;
    a.id = id;
    a.layer = layer;
    a.category = ActionCategory::noop;
    a.resources = std::move(resources);
    a.effects = std::move(effects);
    a.confidence = 0.0;
    a.urgency = 0.0;
    return a;
}

}  // namespace

TEST_CASE("detect_conflict fires on shared resources and contradictory effects") {
    const auto a = proposal(1, "a", {"file:auth.py"}, {"opt_A"});
    const auto b = proposal(2, "b", {"file:views.py"}, {"cache_on"});
    CHECK_FALSE(detect_conflict(a, b));

    const auto c = proposal(2, "c", {"file:auth.py"});
    CHECK(detect_conflict(a, c));

    const auto d = proposal(3, "d", {}, {"!opt_A"});
    CHECK(detect_conflict(a, d));
    CHECK(detect_conflict(d, a));
}

TEST_CASE("detect_conflict is symmetric under fuzz") {
    Rng rng(91);
    for (int i = 0; i < 500; ++i) {
        const auto set = fuzz::proposal_set(rng, 4);
        for (std::size_t x = 0; x < set.size(); ++x)
            for (std::size_t y = x + 1; y < set.size(); ++y)
                CHECK(detect_conflict(set[x], set[y]) == detect_conflict(set[y], set[x]));
    }
}

TEST_CASE("priority adds base, urgency, confidence and hook terms") {
    PriorityConfig cfg;  // alpha (0.1,0.2,0.3,0.4), beta 0.5, gamma 0.2
    Context ctx;

    auto strategic = proposal(3, "s");
    strategic.confidence = 1.0;
    CHECK(priority(strategic, ctx, cfg) == doctest::Approx(0.5));

    auto reflex = proposal(1, "r");
    reflex.urgency = 1.0;
    reflex.confidence = 1.0;
    CHECK(priority(reflex, ctx, cfg) == doctest::Approx(0.8));

    SUBCASE("an emergency context maxes out Reflex urgency only") {
        ctx.emergency = true;
        auto calm_reflex = proposal(1, "r2");
        calm_reflex.confidence = 1.0;
        CHECK(priority(calm_reflex, ctx, cfg) == doctest::Approx(0.8));
        auto tactical = proposal(2, "t");
        tactical.confidence = 1.0;
        CHECK(priority(tactical, ctx, cfg) == doctest::Approx(0.4));
    }

    SUBCASE("a learned hook adds on top and can dominate") {
        cfg.learned_hook = [](const ActionProposal&, const Context&) { return 10.0; };
        CHECK(priority(strategic, ctx, cfg) == doctest::Approx(10.5));
    }

    SUBCASE("layers outside the base table are rejected") {
        CHECK_THROWS_AS(priority(proposal(7, "x"), ctx, cfg), DomainError);
    }
}

TEST_CASE("resolve composes everything when nothing conflicts") {
    PriorityConfig cfg;
    const std::vector<ActionProposal> actions{proposal(1, "p1"), proposal(2, "p2"),
                                              proposal(3, "p3"), proposal(4, "p4")};
    const auto res = resolve(actions, Context{}, cfg);
    CHECK(res.conflicts.empty());
    CHECK(std::all_of(res.mask.begin(), res.mask.end(), [](bool b) { return b; }));
    CHECK(res.priorities.empty());  // early exit skips priority computation
    CHECK(res.final.id == "composite");
    CHECK(res.final.payload.size() == 4);
}

TEST_CASE("resolve masks the lower-priority side of a conflict") {
    PriorityConfig cfg;
    cfg.learned_hook = [](const ActionProposal& a, const Context&) {
        return a.id == "hi" ? 0.8 : 0.1;  // totals 0.9 and 0.3 with the bases
    };
    const std::vector<ActionProposal> actions{proposal(1, "hi", {"res"}),
                                              proposal(2, "lo", {"res"})};
    const auto res = resolve(actions, Context{}, cfg);
    REQUIRE(res.conflicts.size() == 1);
    CHECK(res.priorities[0] == doctest::Approx(0.9));
    CHECK(res.priorities[1] == doctest::Approx(0.3));
    CHECK(res.mask == std::vector<bool>{true, false});
    CHECK(res.final.id == "hi");
}

TEST_CASE("ties keep the faster layer by default, the slower one under the flag") {
    PriorityConfig cfg;
    // Same urgency and confidence; bases differ by 0.1 which is > epsilon, so
    // bump epsilon to force the tie branch.
    cfg.epsilon = 0.2;
    const std::vector<ActionProposal> actions{proposal(1, "fast", {"res"}),
                                              proposal(2, "slow", {"res"})};

    const auto res = resolve(actions, Context{}, cfg);
    CHECK(res.mask == std::vector<bool>{true, false});
    CHECK(res.final.id == "fast");

    cfg.tie_break = PriorityConfig::TieBreak::pseudocode;
    const auto literal = resolve(actions, Context{}, cfg);
    CHECK(literal.mask == std::vector<bool>{false, true});
    CHECK(literal.final.id == "slow");
}

TEST_CASE("compose handles the empty, singleton and composite cases") {
    CHECK(compose({}).category == ActionCategory::noop);

    const auto single = proposal(2, "only", {"r1"});
    CHECK(compose(std::vector<ActionProposal>{single}) == single);

    auto fast = proposal(1, "fast", {"r1"}, {"e1"});
    fast.confidence = 0.9;
    auto slow = proposal(3, "slow", {"r2"}, {"e2"});
    slow.confidence = 0.4;
    const auto composite = compose(std::vector<ActionProposal>{slow, fast});
    CHECK(composite.id == "composite");
    CHECK(composite.layer == 1);
    CHECK(composite.resources == std::set<std::string>{"r1", "r2"});
    CHECK(composite.effects == std::set<std::string>{"e1", "e2"});
    CHECK(composite.confidence == doctest::Approx(0.4));
    REQUIRE(composite.payload.size() == 2);
    CHECK(composite.payload[0]["id"] == Json("fast"));  // fastest first
    CHECK(composite.payload[1]["id"] == Json("slow"));

    const std::vector<ActionProposal> clashing{proposal(1, "x", {"shared"}),
                                               proposal(2, "y", {"shared"})};
    CHECK_THROWS_AS(compose(clashing), ContractViolation);
}

TEST_CASE("resolution is deterministic, total and conflict-free under fuzz") {
    PriorityConfig cfg;
    Rng rng(113);
    for (int i = 0; i < 10000; ++i) {
        Context ctx;
        ctx.emergency = rng.below(4) == 0;
        const auto actions = fuzz::proposal_set(rng, 4);
        const auto res = resolve(actions, ctx, cfg);
        const auto repeat = resolve(actions, ctx, cfg);
        CHECK(canonical_encode(res.to_json()) == canonical_encode(repeat.to_json()));

        std::vector<ActionProposal> survivors;
        for (std::size_t k = 0; k < actions.size(); ++k)
            if (res.mask[k]) survivors.push_back(actions[k]);
        for (std::size_t x = 0; x < survivors.size(); ++x)
            for (std::size_t y = x + 1; y < survivors.size(); ++y)
                CHECK_FALSE(detect_conflict(survivors[x], survivors[y]));

        // Masking soundness: a masked proposal lost at least one conflict.
        for (std::size_t k = 0; k < actions.size(); ++k) {
            if (res.mask[k]) continue;
            const bool participated =
                std::any_of(res.conflicts.begin(), res.conflicts.end(),
                            [&](const auto& pair) {
                                return pair.first == k || pair.second == k;
                            });
            CHECK(participated);
        }
    }
}

TEST_CASE("institutional policy enforcement is never masked by lower layers") {
    PriorityConfig cfg;
    Rng rng(127);
    int contested = 0;
    for (int i = 0; i < 4000; ++i) {
        auto actions = fuzz::proposal_set(rng, 3);  // layers 1..3 only
        ActionProposal policy;
        policy.id = "enforce";
        policy.layer = 4;
        policy.category = ActionCategory::policy_update;
        policy.resources = {"file:auth", "env"};
        policy.effects = {"opt_A"};
        policy.confidence = 0.0;  // weakest possible priority terms
        policy.urgency = 0.0;
        actions.push_back(policy);

        Context ctx;
        ctx.emergency = rng.below(3) == 0;
        const auto res = resolve(actions, ctx, cfg);
        const std::size_t idx = actions.size() - 1;
        CHECK(res.mask[idx]);
        if (std::any_of(res.conflicts.begin(), res.conflicts.end(), [&](const auto& p) {
                return p.first == idx || p.second == idx;
            }))
            ++contested;
    }
    CHECK(contested > 100);  // the guarantee was actually exercised
}

TEST_CASE("reflex safety proposals survive non-institutional conflicts in emergencies") {
    PriorityConfig cfg;
    Rng rng(137);
    int contested = 0;
    for (int i = 0; i < 4000; ++i) {
        auto actions = fuzz::proposal_set(rng, 3);
        // Strip any scripted layer-1 entry so the safety action is the only one.
        std::erase_if(actions, [](const ActionProposal& a) { return a.layer == 1; });
        ActionProposal safety;
        safety.id = "halt";
        safety.layer = 1;
        safety.category = ActionCategory::immediate_response;
        safety.resources = {"env", "db:main"};
        safety.confidence = 0.0;
        safety.urgency = 0.0;
        actions.insert(actions.begin(), safety);

        Context ctx;
        ctx.emergency = true;
        const auto res = resolve(actions, ctx, cfg);
        CHECK(res.mask[0]);
        if (std::any_of(res.conflicts.begin(), res.conflicts.end(),
                        [](const auto& p) { return p.first == 0 || p.second == 0; }))
            ++contested;
    }
    CHECK(contested > 100);
}
