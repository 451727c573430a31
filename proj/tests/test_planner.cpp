#include <memory>

#include "doctest.h"
#include "sihd/pipeline.hpp"
#include "sihd/planner.hpp"

using namespace sihd;

namespace {

struct Trained {
    Config config;
    MazeEnv env;
    EncodingTree tree;
    DiffusionStack stack;
};

Trained train(Config cfg) {
    Trained t;
    t.config = cfg;
    t.env = make_env(cfg);
    const Dataset data = synthesize_dataset(t.env, cfg.episodes, cfg.collector_noise, derive_seed(cfg.seed, "synth"));
    t.tree = build_tree(build_graph(data, cfg).graph, cfg);
    t.stack = train_model(data, t.tree, segment_dataset(data, t.tree), cfg);
    return t;
}

const Trained& small() {
    static const Trained t = [] {
        Config cfg;
        cfg.maze = "open";
        cfg.grid_width = 4;
        cfg.grid_height = 4;
        cfg.episodes = 30;
        cfg.k_max = 8;
        cfg.train_steps = 100;
        cfg.hidden_width = 32;
        cfg.pad_len = 8;
        return train(cfg);
    }();
    return t;
}

const Trained& full() {
    static const Trained t = train(Config{});
    return t;
}

Vec start_state(const MazeEnv& env) { return env.center(env.start()); }

}  // namespace

TEST_CASE("subgoal satisfaction is a closed ball") {
    const SubgoalCriterion c{0.5, {}};
    CHECK(is_satisfied({1.0, 2.0}, {1.0, 2.0}, c));
    CHECK_FALSE(is_satisfied({0.0, 0.0}, {1.0, 0.0}, c));
    CHECK(is_satisfied({0.0, 0.0}, {0.5, 0.0}, c));
    CHECK_THROWS_AS(is_satisfied({0.0}, {0.0, 1.0}, c), ValidationError);
}

TEST_CASE("zero horizon gives no actions") {
    const Trained& t = small();
    REQUIRE(t.stack.height() == 3);
    Rng rng(1);
    const PlanResult r = plan(t.stack, t.tree, start_state(t.env), 0, {0.5, {}}, rng);
    CHECK(r.actions.empty());
    CHECK(r.states.size() == 1);
}

TEST_CASE("planning is deterministic per seed") {
    const Trained& t = small();
    Rng a(7), b(7);
    const PlanResult ra = plan(t.stack, t.tree, start_state(t.env), 12, {0.5, {}}, a);
    const PlanResult rb = plan(t.stack, t.tree, start_state(t.env), 12, {0.5, {}}, b);
    CHECK(ra.actions.size() == 12);
    CHECK(plan_to_json(ra) == plan_to_json(rb));
}

TEST_CASE("top-layer refresh does not recurse") {
    const Trained& t = small();
    Planner p(t.stack, t.tree, {0.5, {}});
    p.reset(start_state(t.env));
    Rng rng(2);
    p.f_su(3, rng);
    REQUIRE(p.result().refreshes.size() == 1);
    CHECK(p.result().refreshes[0].layer == 3);
    CHECK(p.buffer(3).size() == 2);
    CHECK(p.buffer(2).size() == 1);
    CHECK_THROWS(p.f_su(4, rng));
}

TEST_CASE("unsatisfied parent buffer is left alone") {
    const Trained& t = small();
    SubgoalCriterion never{0.5, [](const Vec&, const Vec&, std::size_t) { return false; }};
    Planner p(t.stack, t.tree, never);
    p.reset(start_state(t.env));
    Rng rng(3);
    p.f_su(2, rng);
    CHECK(p.buffer(3).size() == 1);
    CHECK(p.buffer(2).size() == 2);
    CHECK(p.result().refreshes.size() == 1);
}

TEST_CASE("scripted satisfaction gives an ordered refresh trace") {
    const Trained& t = small();
    auto clock = std::make_shared<std::size_t>(0);
    // Layer h's head counts as reached every 2 (h - 1) steps.
    SubgoalCriterion scripted{0.5, [clock](const Vec&, const Vec&, std::size_t h) { return *clock % (2 * (h - 1)) == 0; }};
    PlanHooks hooks;
    hooks.env_step = [clock, &t](const Vec& s, const Vec& a) {
        ++*clock;
        return t.env.center(t.env.apply(t.env.cell_of(s), a));
    };
    Rng rng(4);
    const PlanResult r = plan(t.stack, t.tree, start_state(t.env), 24, scripted, rng, hooks);
    std::size_t count2 = 0, count3 = 0;
    std::size_t last2 = 0, last3 = 0;
    bool first2 = true, first3 = true;
    for (const auto& e : r.refreshes) {
        std::size_t& last = e.layer == 2 ? last2 : last3;
        bool& first = e.layer == 2 ? first2 : first3;
        if (!first) CHECK(e.step > last);
        first = false;
        last = e.step;
        (e.layer == 2 ? count2 : count3) += 1;
    }
    CHECK(count2 == 12);
    CHECK(count3 == 6);
    CHECK(count3 <= count2);
}

TEST_CASE("patience forces refreshes when heads are never reached") {
    const Trained& t = small();
    SubgoalCriterion never{0.5, [](const Vec&, const Vec&, std::size_t) { return false; }};
    PlanHooks hooks;
    hooks.patience = 4;
    Rng rng(5);
    const PlanResult r = plan(t.stack, t.tree, start_state(t.env), 20, never, rng, hooks);
    std::size_t count2 = 0, count3 = 0;
    for (const auto& e : r.refreshes) (e.layer == 2 ? count2 : count3) += 1;
    CHECK(count2 == 4);
    CHECK(count3 == 2);
}

TEST_CASE("mismatched stack and tree are rejected") {
    const Trained& t = small();
    DiffusionStack shallow = t.stack;
    shallow.layers.pop_back();
    CHECK_THROWS_AS(Planner(shallow, t.tree, {0.5, {}}), ValidationError);
    Planner p(t.stack, t.tree, {0.5, {}});
    CHECK_THROWS_AS(p.reset({0.0}), ValidationError);
}

TEST_CASE("trained planner beats the random policy on the maze") {
    const Trained& t = full();
    const EvalReport r = evaluate(t.stack, t.tree, t.env, t.config, 1, 50);
    MESSAGE("planner goal rate " << r.goal_rate << ", random " << r.random_goal_rate);
    CHECK(r.goal_rate > r.random_goal_rate);
}
