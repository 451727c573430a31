#include "sihd/planner.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace sihd {

bool is_satisfied(const Vec& state, const Vec& subgoal, const SubgoalCriterion& criterion, std::size_t layer) {
    if (state.size() != subgoal.size()) throw ValidationError("is_satisfied: state and subgoal shapes differ");
    if (criterion.predicate) return criterion.predicate(state, subgoal, layer);
    return euclidean_distance(state, subgoal) <= criterion.tolerance;
}

Planner::Planner(const DiffusionStack& stack, const EncodingTree& tree, SubgoalCriterion criterion, PlanHooks hooks)
    : stack_(stack), tree_(tree), criterion_(std::move(criterion)), hooks_(std::move(hooks)) {
    if (stack_.layers.empty()) throw ValidationError("planner needs a trained diffusion stack");
    if (stack_.height() < 2) throw ValidationError("planner needs at least two layers");
    if (stack_.height() != tree_.height()) {
        throw ValidationError("model has " + std::to_string(stack_.height()) + " layers but the tree has height " +
                              std::to_string(tree_.height()));
    }
    if (!(criterion_.tolerance > 0.0)) throw ValidationError("goal tolerance must be positive");
    for (const auto& l : stack_.layers) samplers_.push_back(l.sampler());
    for (std::size_t h = 1; h < tree_.height(); ++h) partitions_.push_back(layer_partition(tree_, h));
}

void Planner::reset(const Vec& s0) {
    if (s0.size() != stack_.state_dim) throw ValidationError("initial state has the wrong dimension");
    for (double v : s0)
        if (!std::isfinite(v)) throw ValidationError("initial state must be finite");
    state_ = s0;
    last_action_.assign(stack_.action_dim, 0.0);
    t_ = 0;
    age_.assign(height() + 1, 0);
    result_ = PlanResult{};
    result_.states.push_back(s0);
    result_.buffers.assign(height() - 1, std::vector<Vec>{s0});
}

std::optional<std::vector<Vec>> Planner::rollout(std::size_t h, const Vec& anchor, const Vec* terminal, double y,
                                                 Rng& rng) {
    const auto& layer = stack_.layer(h);
    const Denoiser& model = samplers_[h - 1];
    const std::size_t L = model.shape().seq_len;
    const std::size_t E = model.shape().elem_dim;
    const std::size_t d = stack_.state_dim;
    auto normalized_state = [&](const Vec& s) {
        Vec e = s;
        e.resize(E, 0.0);
        e = layer.normalizer.normalize(e);
        e.resize(d);
        return e;
    };
    const Vec a = normalized_state(anchor);
    const Vec z = terminal ? normalized_state(*terminal) : Vec{};
    auto constrain = [&](Vec& x) {
        std::copy(a.begin(), a.end(), x.begin());
        if (terminal) std::copy(z.begin(), z.end(), x.begin() + static_cast<std::ptrdiff_t>((L - 1) * E));
    };
    // NaN condition: community unresolved, fall back to the null branch.
    const double omega = std::isnan(y) ? 1.0 : stack_.omega;
    const double cond = std::isnan(y) ? 0.0 : y;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const Vec flat = sample_sequence(model, cond, omega, stack_.schedule, rng, constrain, stack_.guidance_mode);
        std::vector<Vec> rows;
        bool finite = true;
        for (std::size_t t = 0; t < L && finite; ++t) {
            Vec row(flat.begin() + static_cast<std::ptrdiff_t>(t * E), flat.begin() + static_cast<std::ptrdiff_t>((t + 1) * E));
            row = layer.normalizer.denormalize(row);
            for (double v : row) finite = finite && std::isfinite(v);
            rows.push_back(std::move(row));
        }
        if (!finite) continue;
        // Known states are restored exactly (terminal replacement).
        std::copy(anchor.begin(), anchor.end(), rows.front().begin());
        if (terminal) std::copy(terminal->begin(), terminal->end(), rows.back().begin());
        return rows;
    }
    return std::nullopt;
}

std::pair<NodeId, double> Planner::community_condition(std::size_t h, const Vec& subgoal) {
    const auto& verts = tree_.vertex_states;
    std::size_t best = kNoNode;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < verts.size(); ++v) {
        if (verts[v].size() != subgoal.size()) continue;
        const double dist = squared_distance(verts[v], subgoal);
        if (dist < best_d) {
            best_d = dist;
            best = v;
        }
    }
    if (best == kNoNode) {
        ++result_.warnings;
        std::cerr << "warning: no tree vertex matches the subgoal; using the unconditional branch\n";
        return {kNoNode, std::numeric_limits<double>::quiet_NaN()};
    }
    const NodeId alpha = partitions_.at(h - 1).community_of[best];
    return {alpha, gain_condition(tree_, alpha)};
}

bool Planner::head_due(std::size_t h) const {
    if (is_satisfied(state_, buffer(h).back(), criterion_, h)) return true;
    return hooks_.patience > 0 && age_[h] >= hooks_.patience * (h - 1);
}

void Planner::f_su(std::size_t h, Rng& rng) {
    const std::size_t K = height();
    if (h < 2 || h > K) throw std::logic_error("f_su called outside layers 2..K");
    if (state_.empty()) throw std::logic_error("planner used before reset");
    if (h < K && head_due(h + 1)) f_su(h + 1, rng);

    RefreshEvent ev{t_, h, {}, 0.0, EncodingTree::kRoot};
    std::optional<std::vector<Vec>> rows;
    Vec fallback = state_;
    if (h == K) {
        ev.condition = reward_condition(stack_.r_max, stack_.r_max);
        rows = rollout(K, state_, nullptr, ev.condition, rng);
    } else {
        const Vec terminal = buffer(h + 1).back();
        std::tie(ev.community, ev.condition) = community_condition(h, terminal);
        rows = rollout(h, state_, &terminal, ev.condition, rng);
        fallback = terminal;
    }
    if (rows) {
        ev.subgoal.assign(rows->at(1).begin(), rows->at(1).begin() + static_cast<std::ptrdiff_t>(stack_.state_dim));
    } else {
        ++result_.fallbacks;
        ev.subgoal = fallback;
    }
    result_.buffers[h - 2].push_back(ev.subgoal);
    age_[h] = 0;
    result_.refreshes.push_back(std::move(ev));
}

Vec Planner::step(Rng& rng) {
    if (state_.empty()) throw std::logic_error("planner used before reset");
    if (head_due(2)) f_su(2, rng);
    const Vec terminal = buffer(2).back();
    const auto [alpha, y] = community_condition(1, terminal);
    (void)alpha;
    const auto rows = rollout(1, state_, &terminal, y, rng);
    const std::size_t d = stack_.state_dim;
    Vec action = last_action_;
    Vec predicted = state_;
    if (rows) {
        action.assign(rows->front().begin() + static_cast<std::ptrdiff_t>(d), rows->front().end());
        predicted.assign(rows->at(1).begin(), rows->at(1).begin() + static_cast<std::ptrdiff_t>(d));
    } else {
        ++result_.fallbacks;
    }
    state_ = hooks_.env_step ? hooks_.env_step(state_, action) : predicted;
    last_action_ = action;
    result_.actions.push_back(action);
    result_.states.push_back(state_);
    result_.conditions.push_back(std::isnan(y) ? 0.0 : y);
    for (auto& a : age_) ++a;
    ++t_;
    return action;
}

PlanResult plan(const DiffusionStack& stack, const EncodingTree& tree, const Vec& s0, std::size_t horizon,
                const SubgoalCriterion& criterion, Rng& rng, const PlanHooks& hooks) {
    Planner p(stack, tree, criterion, hooks);
    p.reset(s0);
    bool stopped = false;
    for (std::size_t t = 0; t < horizon; ++t) {
        if (hooks.done && hooks.done(p.state())) {
            stopped = true;
            break;
        }
        p.step(rng);
    }
    PlanResult r = p.result();
    r.stopped_early = stopped;
    return r;
}

std::string plan_to_json(const PlanResult& r) {
    nlohmann::ordered_json j;
    j["actions"] = r.actions;
    j["states"] = r.states;
    auto refreshes = nlohmann::ordered_json::array();
    for (const auto& e : r.refreshes) {
        nlohmann::ordered_json je;
        je["step"] = e.step;
        je["layer"] = e.layer;
        je["subgoal"] = e.subgoal;
        je["condition"] = e.condition;
        je["community"] = e.community == kNoNode ? -1 : static_cast<long long>(e.community);
        refreshes.push_back(std::move(je));
    }
    j["refreshes"] = std::move(refreshes);
    j["conditions"] = r.conditions;
    j["fallbacks"] = r.fallbacks;
    j["warnings"] = r.warnings;
    j["stopped_early"] = r.stopped_early;
    return j.dump() + "\n";
}

}  // namespace sihd
