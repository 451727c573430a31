#include "sihd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sihd {

namespace {

struct RawSequence {
    std::vector<Vec> elements;
    double condition = 0.0;
    std::vector<std::size_t> vertices;
};

// Windows [p, min(n, p + len)) for every start p; single-element windows only
// when the whole sequence has one element.
template <typename F>
void for_each_suffix(std::size_t n, std::size_t len, F&& emit) {
    for (std::size_t p = 0; p < n; ++p) {
        if (n - p < 2 && n > 1) break;
        emit(p, std::min(n, p + len));
    }
}

}  // namespace

std::vector<LayerDataset> build_training_sets(const Dataset& data, const EncodingTree& tree,
                                              const std::vector<SegmentHierarchy>& hierarchies, std::size_t pad_len) {
    const std::size_t K = tree.height();
    if (K < 2) throw ValidationError("training needs a tree of height at least 2");
    if (pad_len < 2) throw ValidationError("pad length must be at least 2");
    if (hierarchies.size() != data.trajectories.size()) {
        throw ValidationError("segment file does not match the dataset (trajectory count differs)");
    }
    std::vector<std::vector<RawSequence>> raw(K);
    for (std::size_t ti = 0; ti < data.trajectories.size(); ++ti) {
        const auto& traj = data.trajectories[ti];
        const auto& hier = hierarchies[ti];
        if (hier.height() != K || hier.trajectory_length != traj.length()) {
            throw ValidationError("segments of trajectory " + std::to_string(ti) + " do not match the tree/dataset");
        }
        const auto vids = resolve_vertices(traj.states, tree.vertex_states, tree.dedupe_tol);
        const double reward = cumulative_reward(traj);

        for (const auto& seg : hier.layer(1)) {
            const std::size_t a = seg.begin > 0 ? seg.begin - 1 : 0;
            const double y = gain_condition(tree, seg.community);
            for_each_suffix(seg.end - a, pad_len, [&](std::size_t p, std::size_t q) {
                RawSequence r{{}, y, {}};
                for (std::size_t t = a + p; t < a + q; ++t) {
                    Vec e = traj.states[t];
                    e.insert(e.end(), traj.actions[t].begin(), traj.actions[t].end());
                    r.elements.push_back(std::move(e));
                    r.vertices.push_back(vids[t]);
                }
                raw[0].push_back(std::move(r));
            });
        }
        for (std::size_t h = 2; h <= K; ++h) {
            const auto& layer = hier.layer(h);
            for (std::size_t i = 0; i < layer.size(); ++i) {
                const auto& seg = layer[i];
                std::vector<std::size_t> steps{seg.begin > 0 ? seg.begin - 1 : 0};
                const auto kids = hier.child_subgoal_steps(h, i);
                steps.insert(steps.end(), kids.begin(), kids.end());
                const double y = h == K ? reward_condition(reward, data.r_max) : gain_condition(tree, seg.community);
                for_each_suffix(steps.size(), pad_len, [&](std::size_t p, std::size_t q) {
                    RawSequence r{{}, y, {}};
                    for (std::size_t j = p; j < q; ++j) {
                        r.elements.push_back(traj.states[steps[j]]);
                        r.vertices.push_back(vids[steps[j]]);
                    }
                    raw[h - 1].push_back(std::move(r));
                });
            }
        }
    }

    std::vector<LayerDataset> out(K);
    for (std::size_t h = 1; h <= K; ++h) {
        auto& src = raw[h - 1];
        if (src.empty()) throw ValidationError("layer " + std::to_string(h) + " has no training sequences");
        auto& set = out[h - 1];
        set.layer = h;
        set.seq_len = pad_len;
        std::vector<Vec> all;
        for (const auto& r : src) all.insert(all.end(), r.elements.begin(), r.elements.end());
        set.normalizer = Normalizer::fit(all);
        set.elem_dim = set.normalizer.dim();
        for (auto& r : src) {
            std::vector<Vec> norm;
            for (const auto& e : r.elements) norm.push_back(set.normalizer.normalize(e));
            const auto padded = pad_sequence(norm, pad_len);
            Vec flat;
            flat.reserve(pad_len * set.elem_dim);
            for (const auto& e : padded.values) flat.insert(flat.end(), e.begin(), e.end());
            set.sequences.push_back(std::move(flat));
            set.conditions.push_back(r.condition);
            set.vertices.push_back(std::move(r.vertices));
        }
    }
    return out;
}

Denoiser LayerModel::sampler() const {
    Denoiser d = model;
    d.params = ema;
    return d;
}

void Adam::step(Vec& params, const Vec& grad) {
    if (m.size() != params.size()) {
        m.assign(params.size(), 0.0);
        v.assign(params.size(), 0.0);
        t = 0;
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

Vec vertex_rewards(const TransitionModel& model, const EncodingTree& tree, const EntropyTerms& terms) {
    const std::size_t n = model.vertex_count();
    Vec r(n, 0.0);
    const double floor = 1e-12;
    for (std::size_t v = 0; v < n; ++v) r[v] = -std::log2(std::max(model.visitation[v], floor));
    for (std::size_t h = 1; h < tree.height() && h <= terms.eta.size(); ++h) {
        const auto part = layer_partition(tree, h);
        std::vector<double> mass(tree.size(), 0.0);
        for (std::size_t v = 0; v < n; ++v) mass[part.community_of[v]] += model.visitation[v];
        for (std::size_t v = 0; v < n; ++v) {
            r[v] += terms.eta[h - 1] * std::log2(std::max(mass[part.community_of[v]], floor));
        }
    }
    return r;
}

Vec regularizer_weights(const Vec& sample_rewards, double eta) {
    const std::size_t n = sample_rewards.size();
    Vec w(n, 1.0);
    if (n < 2) return w;
    const double mean = std::accumulate(sample_rewards.begin(), sample_rewards.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double r : sample_rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (!(sd > 0.0)) return w;
    for (std::size_t i = 0; i < n; ++i) w[i] = std::max(0.0, 1.0 + eta * (sample_rewards[i] - mean) / sd);
    return w;
}

namespace {

void clip_norm(Vec& g, double max_norm) {
    if (max_norm <= 0.0) return;
    double s = 0.0;
    for (double x : g) s += x * x;
    const double norm = std::sqrt(s);
    if (norm > max_norm) {
        const double f = max_norm / norm;
        for (double& x : g) x *= f;
    }
}

struct Regularizer {
    const EncodingTree* tree = nullptr;
    const VarianceSchedule* schedule = nullptr;
    std::size_t state_dim = 0;
    TrainLog* log = nullptr;
};

LayerModel train_impl(const LayerDataset& set, const VarianceSchedule& schedule, const TrainConfig& config,
                      Vec* loss_trace, const Regularizer* reg) {
    if (set.sequences.empty()) throw ValidationError("cannot train on an empty layer dataset");
    if (config.batch_size == 0) throw ValidationError("batch size must be positive");
    LayerModel out;
    out.layer = set.layer;
    out.normalizer = set.normalizer;
    DenoiserShape shape{set.seq_len, set.elem_dim, config.cond_dim, config.step_dim, config.hidden};
    out.model = Denoiser(shape);
    Rng init_rng(derive_seed(config.seed, "init", set.layer));
    out.model.initialize(init_rng);
    out.ema = out.model.params;

    Rng rng(derive_seed(config.seed, "batches", set.layer));
    Adam adam;
    adam.lr = config.learning_rate;
    std::uniform_int_distribution<std::size_t> pick(0, set.sequences.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_k(1, schedule.steps());
    Vec weights(set.sequences.size(), 1.0);
    std::optional<EntropyTerms> terms;
    const bool regularize = reg && set.layer == 1 && config.reg_eta > 0.0;
    const std::size_t refresh = std::max<std::size_t>(config.kde_refresh, 1);
    const std::size_t D = shape.flat_size();

    std::vector<TrainingExample> batch(config.batch_size);
    for (std::size_t step = 0; step < config.steps; ++step) {
        if (regularize && step % refresh == 0) {
            Rng kde_rng(derive_seed(config.seed, "kde", step));
            const auto tm = estimate_transitions(out.model, set.normalizer, reg->state_dim, *reg->schedule,
                                                 config.kde_samples, kde_rng, reg->tree->vertex_states,
                                                 config.kde_bandwidth_floor, config.guidance_mode);
            terms = entropy_terms(tm, *reg->tree);
            const Vec per_vertex = vertex_rewards(tm, *reg->tree, *terms);
            Vec per_sample(set.sequences.size(), 0.0);
            for (std::size_t i = 0; i < per_sample.size(); ++i) {
                for (std::size_t v : set.vertices[i]) per_sample[i] += per_vertex[v];
                per_sample[i] /= static_cast<double>(std::max<std::size_t>(set.vertices[i].size(), 1));
            }
            weights = regularizer_weights(per_sample, config.reg_eta);
            if (reg->log) {
                const auto report = bound_check(tm.graph(), *reg->tree);
                reg->log->regularizer.push_back(
                    {step, terms->h_s, report.lower, report.value, report.upper, report.holds()});
            }
        }
        for (auto& ex : batch) {
            const std::size_t idx = pick(rng);
            ex.k = pick_k(rng);
            ex.noise.resize(D);
            for (double& e : ex.noise) e = standard_normal(rng);
            ex.noised = forward_diffuse(set.sequences[idx], ex.k, schedule, ex.noise);
            ex.null_condition = uniform01(rng) < config.p_uncond;
            ex.y = set.conditions[idx];
            ex.weight = weights[idx];
        }
        auto result = training_loss(out.model, batch, set.layer, config.reg_eta, terms);
        clip_norm(result.grad, config.grad_clip);
        adam.step(out.model.params, result.grad);
        for (std::size_t i = 0; i < out.ema.size(); ++i) {
            out.ema[i] = config.ema_decay * out.ema[i] + (1.0 - config.ema_decay) * out.model.params[i];
        }
        if (loss_trace) loss_trace->push_back(result.loss);
    }
    return out;
}

}  // namespace

LayerModel train_layer(const LayerDataset& set, const VarianceSchedule& schedule, const TrainConfig& config,
                       Vec* loss_trace) {
    return train_impl(set, schedule, config, loss_trace, nullptr);
}

DiffusionStack train_stack(const std::vector<LayerDataset>& sets, const EncodingTree& tree, const VarianceSchedule& schedule,
                           double omega, std::size_t state_dim, std::size_t action_dim, double r_max,
                           const TrainConfig& config, TrainLog* log) {
    if (sets.size() != tree.height()) throw ValidationError("need one layer dataset per tree layer");
    DiffusionStack stack;
    stack.schedule = schedule;
    stack.omega = omega;
    stack.guidance_mode = config.guidance_mode;
    stack.reg_eta = config.reg_eta;
    stack.state_dim = state_dim;
    stack.action_dim = action_dim;
    stack.r_max = r_max;
    if (log) log->loss.assign(sets.size(), {});
    Regularizer reg{&tree, &schedule, state_dim, log};
    for (std::size_t h = 1; h <= sets.size(); ++h) {
        Vec* trace = log ? &log->loss[h - 1] : nullptr;
        stack.layers.push_back(train_impl(sets[h - 1], schedule, config, trace, &reg));
    }
    return stack;
}

}  // namespace sihd
