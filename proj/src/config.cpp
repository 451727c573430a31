#include "sihd/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace sihd {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) throw ValidationError("config key '" + key + "': invalid value '" + text + "'");
    return v;
}

struct Field {
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

template <typename T>
Field number_field(T Config::*member) {
    return {[member](Config& c, const std::string& v) { c.*member = parse_number<T>("", v); },
            [member](const Config& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return format_double(c.*member);
                } else {
                    return std::to_string(c.*member);
                }
            }};
}

Field string_field(std::string Config::*member) {
    return {[member](Config& c, const std::string& v) { c.*member = v; },
            [member](const Config& c) { return c.*member; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"seed", number_field(&Config::seed)},
        {"maze", string_field(&Config::maze)},
        {"grid_width", number_field(&Config::grid_width)},
        {"grid_height", number_field(&Config::grid_height)},
        {"env_jitter", number_field(&Config::env_jitter)},
        {"goal_reward", number_field(&Config::goal_reward)},
        {"max_episode_steps", number_field(&Config::max_episode_steps)},
        {"episodes", number_field(&Config::episodes)},
        {"collector_noise", number_field(&Config::collector_noise)},
        {"dedupe_tol", number_field(&Config::dedupe_tol)},
        {"similarity", string_field(&Config::similarity)},
        {"symmetrize", string_field(&Config::symmetrize)},
        {"k_min", number_field(&Config::k_min)},
        {"k_max", number_field(&Config::k_max)},
        {"tree_height", number_field(&Config::tree_height)},
        {"diffusion_steps", number_field(&Config::diffusion_steps)},
        {"schedule", string_field(&Config::schedule)},
        {"guidance_weight", number_field(&Config::guidance_weight)},
        {"guidance_mode", string_field(&Config::guidance_mode)},
        {"reg_eta", number_field(&Config::reg_eta)},
        {"pad_len", number_field(&Config::pad_len)},
        {"p_uncond", number_field(&Config::p_uncond)},
        {"kde_refresh", number_field(&Config::kde_refresh)},
        {"kde_samples", number_field(&Config::kde_samples)},
        {"hidden_width", number_field(&Config::hidden_width)},
        {"cond_dim", number_field(&Config::cond_dim)},
        {"step_dim", number_field(&Config::step_dim)},
        {"train_steps", number_field(&Config::train_steps)},
        {"batch_size", number_field(&Config::batch_size)},
        {"learning_rate", number_field(&Config::learning_rate)},
        {"ema_decay", number_field(&Config::ema_decay)},
        {"goal_tolerance", number_field(&Config::goal_tolerance)},
        {"horizon", number_field(&Config::horizon)},
        {"subgoal_patience", number_field(&Config::subgoal_patience)},
        {"eval_seeds", number_field(&Config::eval_seeds)},
        {"eval_episodes", number_field(&Config::eval_episodes)},
    };
    return table;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError("config: " + message);
}

}  // namespace

void Config::validate() const {
    require(maze == "rooms" || maze == "open", "maze must be 'rooms' or 'open'");
    require(grid_width >= 2 && grid_width <= 64 && grid_height >= 2 && grid_height <= 64,
            "grid dimensions must be in [2, 64]");
    require(maze != "rooms" || (grid_width == 8 && grid_height == 8), "the rooms maze is 8x8");
    require(env_jitter >= 0.0 && env_jitter < 0.5, "env_jitter must be in [0, 0.5)");
    require(goal_reward > 0.0 && std::isfinite(goal_reward), "goal_reward must be positive");
    require(max_episode_steps >= 1, "max_episode_steps must be >= 1");
    require(episodes >= 1, "episodes must be >= 1");
    require(collector_noise >= 0.0 && collector_noise <= 1.0, "collector_noise must be in [0, 1]");
    require(dedupe_tol >= 0.0 && std::isfinite(dedupe_tol), "dedupe_tol must be >= 0");
    require(similarity == "rbf" || similarity == "cosine", "similarity must be 'rbf' or 'cosine'");
    require(symmetrize == "union" || symmetrize == "intersection", "symmetrize must be 'union' or 'intersection'");
    require(k_min >= 1 && k_min <= k_max, "need 1 <= k_min <= k_max");
    require(tree_height >= 2 && tree_height <= 8, "tree_height must be in [2, 8] (a hierarchy needs at least 2 layers)");
    require(diffusion_steps >= 2 && diffusion_steps <= 1000, "diffusion_steps must be in [2, 1000]");
    require(schedule == "linear" || schedule == "cosine", "schedule must be 'linear' or 'cosine'");
    require(guidance_weight >= 0.0 && guidance_weight <= 1.0, "guidance_weight must be in [0, 1]");
    require(guidance_mode == "embedding" || guidance_mode == "output", "guidance_mode must be 'embedding' or 'output'");
    require(reg_eta >= 0.0 && reg_eta <= 10.0, "reg_eta must be in [0, 10]");
    require(pad_len >= 2 && pad_len <= 256, "pad_len must be in [2, 256]");
    require(p_uncond >= 0.0 && p_uncond <= 1.0, "p_uncond must be in [0, 1]");
    require(kde_refresh >= 1, "kde_refresh must be >= 1");
    require(kde_samples >= 2, "kde_samples must be >= 2");
    require(hidden_width >= 1 && hidden_width <= 4096, "hidden_width must be in [1, 4096]");
    require(cond_dim >= 1 && cond_dim <= 1024, "cond_dim must be in [1, 1024]");
    require(step_dim >= 2 && step_dim <= 1024, "step_dim must be in [2, 1024]");
    require(train_steps >= 0, "train_steps must be >= 0");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(learning_rate > 0.0 && learning_rate < 1.0, "learning_rate must be in (0, 1)");
    require(ema_decay >= 0.0 && ema_decay < 1.0, "ema_decay must be in [0, 1)");
    require(goal_tolerance > 0.0, "goal_tolerance must be positive");
    require(horizon >= 0, "horizon must be >= 0");
    require(subgoal_patience >= 0, "subgoal_patience must be >= 0");
    require(eval_seeds >= 1, "eval_seeds must be >= 1");
    require(eval_episodes >= 0, "eval_episodes must be >= 0");
}

void Config::set(const std::string& key, const std::string& value) {
    for (const auto& [name, field] : fields()) {
        if (name != key) continue;
        try {
            field.set(*this, trim(value));
        } catch (const ValidationError&) {
            throw ValidationError("config key '" + key + "': invalid value '" + value + "'");
        }
        return;
    }
    throw ValidationError("unknown config key '" + key + "'");
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& [name, field] : fields()) out += name + " = " + field.get(*this) + "\n";
    return out;
}

std::uint64_t Config::hash() const { return fnv1a(to_text()); }

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.first);
    return keys;
}

Config parse_config(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.validate();
    return c;
}

Config load_config(const std::string& path) { return parse_config(read_file(path)); }

void apply_overrides(Config& config, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ValidationError("override '" + o + "' is not key=value");
        config.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    config.validate();
}

}  // namespace sihd
