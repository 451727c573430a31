#pragma once

#include <string>
#include <vector>

#include "sihd/dataset.hpp"
#include "sihd/diffusion.hpp"
#include "sihd/encoding_tree.hpp"
#include "sihd/segmentation.hpp"
#include "sihd/transition.hpp"

namespace sihd {

// Fixed-length, normalized training sequences for one layer. Layer 1 elements
// are (state, action) rows; higher layers are subgoal states. Every sequence
// starts with the state preceding its segment (the anchor) and every suffix
// is included so the planner can condition on any start.
struct LayerDataset {
    std::size_t layer = 0;
    std::size_t seq_len = 0;
    std::size_t elem_dim = 0;
    Normalizer normalizer;
    std::vector<Vec> sequences;                  // flat, normalized, padded
    Vec conditions;                              // scalar condition per sequence
    std::vector<std::vector<std::size_t>> vertices;  // vertex ids of the real states
};

/// One dataset per layer h = 1..tree height.
std::vector<LayerDataset> build_training_sets(const Dataset& data, const EncodingTree& tree,
                                              const std::vector<SegmentHierarchy>& hierarchies, std::size_t pad_len);

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t steps = 1500;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double ema_decay = 0.995;
    double p_uncond = 0.25;
    double grad_clip = 1.0;
    std::size_t hidden = 128;
    std::size_t cond_dim = 16;
    std::size_t step_dim = 16;
    double reg_eta = 0.0;
    std::size_t kde_refresh = 50;
    std::size_t kde_samples = 32;
    double kde_bandwidth_floor = 1e-3;
    GuidanceMode guidance_mode = GuidanceMode::embedding;
};

struct LayerModel {
    std::size_t layer = 0;
    Denoiser model;  // raw parameters
    Vec ema;         // shadow parameters used for sampling
    Normalizer normalizer;

    /// Copy of the denoiser carrying the EMA parameters.
    Denoiser sampler() const;
};

struct DiffusionStack {
    VarianceSchedule schedule;
    double omega = 0.1;
    GuidanceMode guidance_mode = GuidanceMode::embedding;
    double reg_eta = 0.0;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    double r_max = 0.0;
    std::uint64_t config_hash = 0;
    std::vector<LayerModel> layers;  // layers[h - 1]

    std::size_t height() const { return layers.size(); }
    const LayerModel& layer(std::size_t h) const { return layers.at(h - 1); }
};

struct RegularizerRecord {
    std::size_t step = 0;
    double h_s = 0.0;
    double lower = 0.0;
    double value = 0.0;
    double upper = 0.0;
    bool bound_holds = true;
};

struct TrainLog {
    std::vector<Vec> loss;  // loss[h - 1][step]
    std::vector<RegularizerRecord> regularizer;
};

/// Adam step with bias correction; state vectors are resized on first use.
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    Vec m;
    Vec v;

    void step(Vec& params, const Vec& grad);
};

/// Per-vertex reward of the entropy surrogate: -log2 p(v) + sum_h eta_h log2 p(U_h(v)).
Vec vertex_rewards(const TransitionModel& model, const EncodingTree& tree, const EntropyTerms& terms);
/// Sample weights 1 + eta * zscore(r_i), clamped at 0.
Vec regularizer_weights(const Vec& sample_rewards, double eta);

/// Trains one denoiser per layer. Deterministic for a given seed.
DiffusionStack train_stack(const std::vector<LayerDataset>& sets, const EncodingTree& tree, const VarianceSchedule& schedule,
                           double omega, std::size_t state_dim, std::size_t action_dim, double r_max,
                           const TrainConfig& config, TrainLog* log = nullptr);

/// Trains a single denoiser on one layer dataset (no regularizer).
LayerModel train_layer(const LayerDataset& set, const VarianceSchedule& schedule, const TrainConfig& config,
                       Vec* loss_trace = nullptr);

}  // namespace sihd
