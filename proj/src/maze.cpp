#include "sihd/maze.hpp"

#include <cmath>
#include <deque>
#include <sstream>

#include "json.hpp"

namespace sihd {

namespace {

constexpr Cell kMoves[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};

Vec move_vector(Cell from, Cell to) {
    return {static_cast<double>(to.x - from.x), static_cast<double>(to.y - from.y)};
}

}  // namespace

MazeEnv::MazeEnv(int width, int height, std::vector<bool> walls, Cell start, Cell goal)
    : width_(width), height_(height), walls_(std::move(walls)), start_(start), goal_(goal) {
    if (width <= 0 || height <= 0) throw ValidationError("maze dimensions must be positive");
    if (walls_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw ValidationError("wall mask size does not match grid");
    }
}

MazeEnv MazeEnv::open(int width, int height) {
    if (width <= 0 || height <= 0) throw ValidationError("maze dimensions must be positive");
    return MazeEnv(width, height, std::vector<bool>(static_cast<std::size_t>(width * height), false), {0, 0},
                   {width - 1, height - 1});
}

MazeEnv MazeEnv::from_text(const std::string& text, int width, int height) {
    std::vector<bool> walls(static_cast<std::size_t>(width * height), false);
    Cell start{0, 0};
    Cell goal{width - 1, height - 1};
    std::istringstream in(text);
    std::string line;
    int y = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (y >= height) throw ValidationError("walls file has more than " + std::to_string(height) + " rows");
        if (static_cast<int>(line.size()) != width) {
            throw ValidationError("walls file row " + std::to_string(y) + " has width " +
                                  std::to_string(line.size()) + ", expected " + std::to_string(width));
        }
        for (int x = 0; x < width; ++x) {
            switch (line[static_cast<std::size_t>(x)]) {
                case '#': walls[static_cast<std::size_t>(y * width + x)] = true; break;
                case '.': break;
                case 'S': start = {x, y}; break;
                case 'G': goal = {x, y}; break;
                default: throw ValidationError(std::string("unknown walls character '") + line[x] + "'");
            }
        }
        ++y;
    }
    if (y != height) throw ValidationError("walls file has " + std::to_string(y) + " rows, expected " + std::to_string(height));
    return MazeEnv(width, height, std::move(walls), start, goal);
}

bool MazeEnv::is_wall(Cell c) const { return walls_[static_cast<std::size_t>(c.y * width_ + c.x)]; }

bool MazeEnv::is_free(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_ && !is_wall(c);
}

void MazeEnv::validate() const {
    if (!is_free(start_)) throw ValidationError("start cell is a wall or outside the grid");
    if (!is_free(goal_)) throw ValidationError("goal cell is a wall or outside the grid");
    if (start_ == goal_) throw ValidationError("start and goal must differ");
    if (jitter < 0.0 || jitter >= 0.5) throw ValidationError("jitter must lie in [0, 0.5)");
    if (max_steps < 1) throw ValidationError("max_steps must be positive");
    if (shortest_path_length() < 0) throw ValidationError("unreachable goal: no wall-free path from start");
}

Vec MazeEnv::center(Cell c) const { return {static_cast<double>(c.x), static_cast<double>(c.y)}; }

Vec MazeEnv::observe(Cell c, Rng& rng) const {
    Vec s = center(c);
    if (jitter > 0.0) {
        std::uniform_real_distribution<double> u(-jitter, jitter);
        for (double& v : s) v += u(rng);
    }
    return s;
}

Cell MazeEnv::cell_of(const Vec& state) const {
    return {static_cast<int>(std::lround(state[0])), static_cast<int>(std::lround(state[1]))};
}

std::vector<int> MazeEnv::distances_to_goal() const {
    std::vector<int> dist(static_cast<std::size_t>(width_ * height_), -1);
    if (!is_free(goal_)) return dist;
    std::deque<Cell> queue{goal_};
    dist[static_cast<std::size_t>(goal_.y * width_ + goal_.x)] = 0;
    while (!queue.empty()) {
        const Cell c = queue.front();
        queue.pop_front();
        const int dc = dist[static_cast<std::size_t>(c.y * width_ + c.x)];
        for (Cell m : kMoves) {
            const Cell n{c.x + m.x, c.y + m.y};
            if (!is_free(n)) continue;
            auto& dn = dist[static_cast<std::size_t>(n.y * width_ + n.x)];
            if (dn < 0) {
                dn = dc + 1;
                queue.push_back(n);
            }
        }
    }
    return dist;
}

int MazeEnv::shortest_path_length() const {
    if (!is_free(start_)) return -1;
    return distances_to_goal()[static_cast<std::size_t>(start_.y * width_ + start_.x)];
}

Cell MazeEnv::apply(Cell from, const Vec& action) const {
    if (action.size() < 2 || !std::isfinite(action[0]) || !std::isfinite(action[1])) return from;
    const double ax = action[0];
    const double ay = action[1];
    if (std::max(std::abs(ax), std::abs(ay)) < 0.5) return from;
    Cell to = from;
    if (std::abs(ax) >= std::abs(ay)) {
        to.x += ax > 0 ? 1 : -1;
    } else {
        to.y += ay > 0 ? 1 : -1;
    }
    return is_free(to) ? to : from;
}

std::vector<Cell> MazeEnv::free_neighbors(Cell c) const {
    std::vector<Cell> out;
    for (Cell m : kMoves) {
        const Cell n{c.x + m.x, c.y + m.y};
        if (is_free(n)) out.push_back(n);
    }
    return out;
}

std::string MazeEnv::walls_text() const {
    std::string out;
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            const Cell c{x, y};
            out += c == start_ ? 'S' : c == goal_ ? 'G' : is_wall(c) ? '#' : '.';
        }
        out += '\n';
    }
    return out;
}

std::string env_to_json(const MazeEnv& env) {
    nlohmann::ordered_json j;
    j["width"] = env.width();
    j["height"] = env.height();
    std::vector<std::string> rows;
    std::istringstream in(env.walls_text());
    for (std::string line; std::getline(in, line);) rows.push_back(line);
    j["rows"] = rows;
    j["start"] = {env.start().x, env.start().y};
    j["goal"] = {env.goal().x, env.goal().y};
    j["jitter"] = env.jitter;
    j["goal_reward"] = env.goal_reward;
    j["max_steps"] = env.max_steps;
    return j.dump(2) + "\n";
}

MazeEnv env_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        const int w = j.at("width").get<int>();
        const int h = j.at("height").get<int>();
        std::string rows;
        for (const auto& r : j.at("rows")) rows += r.get<std::string>() + "\n";
        MazeEnv env = MazeEnv::from_text(rows, w, h);
        if (j.contains("start") || j.contains("goal")) {
            const Cell s{j.at("start")[0].get<int>(), j.at("start")[1].get<int>()};
            const Cell g{j.at("goal")[0].get<int>(), j.at("goal")[1].get<int>()};
            std::vector<bool> walls;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) walls.push_back(env.is_wall({x, y}));
            env = MazeEnv(w, h, std::move(walls), s, g);
        }
        env.jitter = j.value("jitter", 0.0);
        env.goal_reward = j.value("goal_reward", 1.0);
        env.max_steps = j.value("max_steps", 128);
        env.validate();
        return env;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid env file: ") + e.what());
    }
}

Trajectory collect_episode(const MazeEnv& env, double noise, Rng& rng) {
    const auto dist = env.distances_to_goal();
    auto d = [&](Cell c) { return dist[static_cast<std::size_t>(c.y * env.width() + c.x)]; };
    Trajectory tr;
    Cell cell = env.start();
    tr.states.push_back(env.observe(cell, rng));
    for (int step = 0; step < env.max_steps && !(cell == env.goal()); ++step) {
        const auto neighbors = env.free_neighbors(cell);
        Cell next = cell;
        // Draw both numbers every step so the stream layout is independent of noise.
        const double coin = uniform01(rng);
        const auto pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(neighbors.size()));
        if (coin < noise) {
            next = neighbors[std::min(pick, neighbors.size() - 1)];
        } else {
            for (Cell n : neighbors) {
                if (d(n) >= 0 && d(n) < d(cell)) {
                    next = n;
                    break;
                }
            }
        }
        tr.actions.push_back(move_vector(cell, next));
        tr.rewards.push_back(next == env.goal() ? env.goal_reward : 0.0);
        cell = next;
        tr.states.push_back(env.observe(cell, rng));
    }
    tr.actions.push_back({0.0, 0.0});
    tr.rewards.push_back(0.0);
    return tr;
}

Dataset synthesize_dataset(const MazeEnv& env, int n_episodes, double noise, std::uint64_t seed) {
    env.validate();
    if (n_episodes <= 0) throw ValidationError("episode count must be positive");
    if (noise < 0.0 || noise > 1.0) throw ValidationError("noise must lie in [0, 1]");
    Rng rng(seed);
    std::vector<Trajectory> trajs;
    trajs.reserve(static_cast<std::size_t>(n_episodes));
    for (int i = 0; i < n_episodes; ++i) trajs.push_back(collect_episode(env, noise, rng));
    return make_dataset(std::move(trajs));
}

EpisodeOutcome run_random_policy(const MazeEnv& env, int horizon, Rng& rng) {
    EpisodeOutcome out;
    Cell cell = env.start();
    out.states.push_back(env.observe(cell, rng));
    for (int t = 0; t < horizon && !out.reached_goal; ++t) {
        const Cell m = kMoves[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 3)(rng))];
        cell = env.apply(cell, {static_cast<double>(m.x), static_cast<double>(m.y)});
        out.states.push_back(env.observe(cell, rng));
        ++out.steps;
        if (cell == env.goal()) {
            out.reached_goal = true;
            out.total_reward += env.goal_reward;
        }
    }
    return out;
}

EpisodeOutcome run_greedy_policy(const MazeEnv& env, int horizon, Rng& rng) {
    MazeEnv truncated = env;
    truncated.max_steps = horizon;
    const Trajectory tr = collect_episode(truncated, 0.0, rng);
    EpisodeOutcome out;
    out.states = tr.states;
    out.steps = static_cast<int>(tr.states.size()) - 1;
    out.total_reward = cumulative_reward(tr);
    out.reached_goal = env.cell_of(tr.states.back()) == env.goal();
    return out;
}

}  // namespace sihd
