#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sihd/encoding_tree.hpp"
#include "sihd/training.hpp"

namespace sihd {

struct SubgoalCriterion {
    double tolerance = 0.5;
    // Optional override (state, subgoal, layer of the buffer) for scripted runs.
    std::function<bool(const Vec&, const Vec&, std::size_t)> predicate;
};

/// Euclidean distance <= tolerance (closed ball), unless a predicate is set.
bool is_satisfied(const Vec& state, const Vec& subgoal, const SubgoalCriterion& criterion, std::size_t layer = 2);

struct RefreshEvent {
    std::size_t step = 0;
    std::size_t layer = 0;  // buffer h = 2..K
    Vec subgoal;
    double condition = 0.0;
    NodeId community = kNoNode;
};

struct PlanHooks {
    // Closed-loop mode: the next state comes from the environment instead of
    // the generated sequence.
    std::function<Vec(const Vec& state, const Vec& action)> env_step;
    // Stops the loop early (e.g. goal reached).
    std::function<bool(const Vec& state)> done;
    // Forced refresh after this many steps without satisfying a buffer's head
    // (scaled by layer); 0 disables.
    std::size_t patience = 0;
};

struct PlanResult {
    std::vector<Vec> actions;
    std::vector<Vec> states;  // states[0] = s0, one more than actions
    std::vector<RefreshEvent> refreshes;
    Vec conditions;  // layer-1 condition per step
    std::vector<std::vector<Vec>> buffers;  // buffers[h - 2], h = 2..K
    std::size_t fallbacks = 0;
    std::size_t warnings = 0;
    bool stopped_early = false;
};

// Algorithm state for one planning session: per-layer subgoal buffers, the
// current state and the growing state/action record.
class Planner {
public:
    Planner(const DiffusionStack& stack, const EncodingTree& tree, SubgoalCriterion criterion, PlanHooks hooks = {});

    /// Every buffer restarts at s0.
    void reset(const Vec& s0);
    /// Appends a new subgoal to buffer h (2 <= h <= K), first refreshing the
    /// parent buffer when its head is satisfied.
    void f_su(std::size_t h, Rng& rng);
    /// One outer iteration: refresh if needed, generate, emit one action.
    Vec step(Rng& rng);

    const Vec& state() const { return state_; }
    const std::vector<Vec>& buffer(std::size_t h) const { return result_.buffers.at(h - 2); }
    const PlanResult& result() const { return result_; }
    std::size_t height() const { return stack_.height(); }

private:
    std::optional<std::vector<Vec>> rollout(std::size_t h, const Vec& anchor, const Vec* terminal, double y, Rng& rng);
    std::pair<NodeId, double> community_condition(std::size_t h, const Vec& subgoal);
    bool head_due(std::size_t h) const;

    const DiffusionStack& stack_;
    const EncodingTree& tree_;
    SubgoalCriterion criterion_;
    PlanHooks hooks_;
    std::vector<Denoiser> samplers_;
    std::vector<LayerPartition> partitions_;  // partitions_[h - 1], h = 1..K-1
    Vec state_;
    Vec last_action_;
    std::vector<std::size_t> age_;  // steps since buffer h last refreshed
    std::size_t t_ = 0;
    PlanResult result_;
};

/// Receding-horizon hierarchical planning from s0 for `horizon` steps.
PlanResult plan(const DiffusionStack& stack, const EncodingTree& tree, const Vec& s0, std::size_t horizon,
                const SubgoalCriterion& criterion, Rng& rng, const PlanHooks& hooks = {});

std::string plan_to_json(const PlanResult& result);

}  // namespace sihd
