#pragma once

#include <string>
#include <vector>

#include "sihd/common.hpp"
#include "sihd/dataset.hpp"

namespace sihd {

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

// Grid maze with continuous 2D observations (cell center plus uniform
// jitter) and 4-connected unit moves. Reward is sparse: goal_reward on the
// transition that enters the goal cell.
class MazeEnv {
public:
    MazeEnv() = default;
    MazeEnv(int width, int height, std::vector<bool> walls, Cell start, Cell goal);

    /// Wall-free W x H grid, start at (0,0), goal at (W-1,H-1).
    static MazeEnv open(int width, int height);
    /// Rows of '#' (wall), '.' (free), 'S' (start), 'G' (goal); first row is y = 0.
    static MazeEnv from_text(const std::string& text, int width, int height);

    int width() const { return width_; }
    int height() const { return height_; }
    Cell start() const { return start_; }
    Cell goal() const { return goal_; }
    bool is_wall(Cell c) const;
    bool is_free(Cell c) const;

    double jitter = 0.0;
    double goal_reward = 1.0;
    int max_steps = 128;

    /// Throws ValidationError if start/goal are walls or the goal is unreachable.
    void validate() const;

    Vec center(Cell c) const;
    Vec observe(Cell c, Rng& rng) const;
    Cell cell_of(const Vec& state) const;

    /// Shortest-path step counts to the goal; -1 for unreachable cells.
    std::vector<int> distances_to_goal() const;
    int shortest_path_length() const;

    /// Resolves a continuous displacement into a 4-connected move. Moves into
    /// walls or off the grid leave the agent in place.
    Cell apply(Cell from, const Vec& action) const;
    std::vector<Cell> free_neighbors(Cell c) const;

    std::string walls_text() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<bool> walls_;
    Cell start_;
    Cell goal_;
};

std::string env_to_json(const MazeEnv& env);
MazeEnv env_from_json(const std::string& text);

struct EpisodeOutcome {
    bool reached_goal = false;
    int steps = 0;
    double total_reward = 0.0;
    std::vector<Vec> states;
};

/// epsilon-noisy shortest-path walker; noise = probability of a uniformly
/// random free move at each step.
Trajectory collect_episode(const MazeEnv& env, double noise, Rng& rng);
Dataset synthesize_dataset(const MazeEnv& env, int n_episodes, double noise, std::uint64_t seed);

/// Uniform random unit moves (blocked moves stay in place) for `horizon` steps.
EpisodeOutcome run_random_policy(const MazeEnv& env, int horizon, Rng& rng);
/// Noise-free collector truncated at `horizon` steps.
EpisodeOutcome run_greedy_policy(const MazeEnv& env, int horizon, Rng& rng);

}  // namespace sihd
