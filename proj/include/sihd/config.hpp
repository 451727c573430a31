#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sihd/common.hpp"

namespace sihd {

// Every tunable of the pipeline. Text form: one "key = value" per line,
// '#' starts a comment.
struct Config {
    std::uint64_t seed = 0;
    // environment / data
    std::string maze = "rooms";  // rooms | open
    int grid_width = 8;
    int grid_height = 8;
    double env_jitter = 0.0;
    double goal_reward = 1.0;
    int max_episode_steps = 128;
    int episodes = 200;
    double collector_noise = 0.3;
    // graph / tree
    double dedupe_tol = 1e-9;
    std::string similarity = "rbf";
    std::string symmetrize = "union";
    int k_min = 2;
    int k_max = 16;
    int tree_height = 3;
    // diffusion
    int diffusion_steps = 20;
    std::string schedule = "cosine";
    double guidance_weight = 0.1;
    std::string guidance_mode = "embedding";
    double reg_eta = 0.1;
    int pad_len = 16;
    double p_uncond = 0.25;
    int kde_refresh = 50;
    int kde_samples = 32;
    int hidden_width = 128;
    int cond_dim = 16;
    int step_dim = 16;
    int train_steps = 1500;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double ema_decay = 0.995;
    // planning / evaluation
    double goal_tolerance = 0.5;
    int horizon = 64;
    int subgoal_patience = 8;
    int eval_seeds = 5;
    int eval_episodes = 10;

    /// Range checks; throws ValidationError.
    void validate() const;
    /// Sets one key from text; unknown keys and malformed values throw.
    void set(const std::string& key, const std::string& value);
    /// Canonical "key = value" text, fixed key order.
    std::string to_text() const;
    std::uint64_t hash() const;
};

std::vector<std::string> config_keys();
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
/// Applies "key=value" overrides in order, then validates.
void apply_overrides(Config& config, const std::vector<std::string>& overrides);

}  // namespace sihd
