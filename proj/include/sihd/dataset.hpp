#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sihd/common.hpp"

namespace sihd {

// One episode: T+1 states, actions and rewards. The final action/reward is
// the terminal placeholder (zero vector / 0.0).
struct Trajectory {
    std::vector<Vec> states;
    std::vector<Vec> actions;
    std::vector<double> rewards;

    std::size_t length() const { return states.size(); }
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    double r_max = 0.0;
};

double cumulative_reward(const Trajectory& traj);

/// Validates every trajectory against the first one's dimensions and
/// recomputes r_max. Throws ValidationError on any violation.
Dataset make_dataset(std::vector<Trajectory> trajectories);

/// JSON-Lines: one {"states","actions","rewards"} object per line.
Dataset parse_dataset(std::istream& in);
Dataset load_dataset(const std::string& path);

/// Canonical JSON-Lines text (file order, 17 significant digits).
std::string dataset_to_jsonl(const Dataset& ds);
void save_dataset(const Dataset& ds, const std::string& path);

}  // namespace sihd
