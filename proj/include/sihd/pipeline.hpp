#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sihd/config.hpp"
#include "sihd/dataset.hpp"
#include "sihd/encoding_tree.hpp"
#include "sihd/maze.hpp"
#include "sihd/planner.hpp"
#include "sihd/segmentation.hpp"
#include "sihd/state_graph.hpp"
#include "sihd/training.hpp"

namespace sihd {

inline constexpr const char* kVersion = "sihd 1.0.0";

/// Built-in 8x8 maze with four rooms joined by doorways.
MazeEnv rooms_maze();
MazeEnv make_env(const Config& config);

KSelection build_graph(const Dataset& data, const Config& config);
EncodingTree build_tree(const StateGraph& graph, const Config& config, std::vector<double>* trace = nullptr);
std::vector<SegmentHierarchy> segment_dataset(const Dataset& data, const EncodingTree& tree);
TrainConfig train_config(const Config& config);
DiffusionStack train_model(const Dataset& data, const EncodingTree& tree, const std::vector<SegmentHierarchy>& hierarchies,
                           const Config& config, TrainLog* log = nullptr);

struct PolicyStats {
    double goal_rate = 0.0;
    double mean_reward = 0.0;
    double mean_length = 0.0;
};

struct SeedReport {
    std::size_t seed_index = 0;
    std::uint64_t seed = 0;
    std::size_t episodes = 0;
    PolicyStats planner;
    PolicyStats random;
    PolicyStats greedy;
    double normalized_score = 0.0;
};

struct EvalReport {
    std::uint64_t config_hash = 0;
    std::size_t episodes = 0;  // total over seeds
    bool zero_episodes = false;
    double goal_rate = 0.0;
    double goal_rate_std = 0.0;
    double mean_reward = 0.0;
    double mean_length = 0.0;
    double normalized_score = 0.0;
    double normalized_score_std = 0.0;
    double random_goal_rate = 0.0;
    double greedy_goal_rate = 0.0;
    std::vector<SeedReport> per_seed;
};

/// 100 (score - random) / (greedy - random); 0 when the anchors coincide.
double normalized_score(double score, double random_score, double greedy_score);

/// Planner, random and greedy rollouts for `seeds` x `episodes` in the maze.
EvalReport evaluate(const DiffusionStack& stack, const EncodingTree& tree, const MazeEnv& env, const Config& config,
                    std::size_t episodes, std::size_t seeds);
/// Mean/std aggregation of per-seed results (population std).
EvalReport aggregate(std::vector<SeedReport> per_seed, std::uint64_t config_hash);

std::string seed_report_to_json(const SeedReport& r);
SeedReport seed_report_from_json(const std::string& text);
std::string eval_report_to_json(const EvalReport& r);

struct StageStatus {
    std::string name;
    std::string artifact;
    bool skipped = false;
};

struct PipelineResult {
    EvalReport report;
    std::vector<StageStatus> stages;
};

/// Runs synth -> graph -> partition -> segment -> train -> eval in `workdir`,
/// reusing artifacts whose recorded input hash still matches.
PipelineResult run_pipeline(const Config& config, const std::string& workdir, std::ostream* log = nullptr);

}  // namespace sihd
