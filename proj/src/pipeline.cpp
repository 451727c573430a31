#include "sihd/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "sihd/checkpoint.hpp"

namespace sihd {

namespace fs = std::filesystem;

MazeEnv rooms_maze() {
    static const char* layout =
        "S..#....\n"
        "...#....\n"
        "........\n"
        "...#....\n"
        "##.###.#\n"
        "...#....\n"
        "........\n"
        "...#...G\n";
    return MazeEnv::from_text(layout, 8, 8);
}

MazeEnv make_env(const Config& config) {
    MazeEnv env = config.maze == "rooms" ? rooms_maze() : MazeEnv::open(config.grid_width, config.grid_height);
    env.jitter = config.env_jitter;
    env.goal_reward = config.goal_reward;
    env.max_steps = config.max_episode_steps;
    env.validate();
    return env;
}

KSelection build_graph(const Dataset& data, const Config& config) {
    const auto dd = dedupe_states(data, config.dedupe_tol);
    if (dd.vertices.size() < 2) throw ValidationError("dataset has fewer than two distinct states");
    const std::size_t k_max = std::min<std::size_t>(static_cast<std::size_t>(config.k_max), dd.vertices.size() - 1);
    const std::size_t k_min = std::min<std::size_t>(static_cast<std::size_t>(config.k_min), k_max);
    const auto sym = config.symmetrize == "union" ? Symmetrize::union_of : Symmetrize::intersection_of;
    auto sel = select_k(dd.vertices, k_min, k_max, parse_similarity(config.similarity), sym);
    sel.graph.dedupe_tol = config.dedupe_tol;
    return sel;
}

EncodingTree build_tree(const StateGraph& graph, const Config& config, std::vector<double>* trace) {
    return hcse_optimize(graph, static_cast<std::size_t>(config.tree_height), trace);
}

std::vector<SegmentHierarchy> segment_dataset(const Dataset& data, const EncodingTree& tree) {
    std::vector<SegmentHierarchy> out;
    out.reserve(data.trajectories.size());
    for (const auto& traj : data.trajectories) out.push_back(build_hierarchy(traj, tree));
    return out;
}

TrainConfig train_config(const Config& c) {
    TrainConfig t;
    t.seed = derive_seed(c.seed, "train");
    t.steps = static_cast<std::size_t>(c.train_steps);
    t.batch_size = static_cast<std::size_t>(c.batch_size);
    t.learning_rate = c.learning_rate;
    t.ema_decay = c.ema_decay;
    t.p_uncond = c.p_uncond;
    t.hidden = static_cast<std::size_t>(c.hidden_width);
    t.cond_dim = static_cast<std::size_t>(c.cond_dim);
    t.step_dim = static_cast<std::size_t>(c.step_dim);
    t.reg_eta = c.reg_eta;
    t.kde_refresh = static_cast<std::size_t>(c.kde_refresh);
    t.kde_samples = static_cast<std::size_t>(c.kde_samples);
    t.guidance_mode = c.guidance_mode == "output" ? GuidanceMode::output : GuidanceMode::embedding;
    return t;
}

DiffusionStack train_model(const Dataset& data, const EncodingTree& tree, const std::vector<SegmentHierarchy>& hierarchies,
                           const Config& config, TrainLog* log) {
    const auto sets = build_training_sets(data, tree, hierarchies, static_cast<std::size_t>(config.pad_len));
    const auto schedule = make_schedule(parse_schedule(config.schedule), static_cast<std::size_t>(config.diffusion_steps));
    auto stack = train_stack(sets, tree, schedule, config.guidance_weight, data.state_dim, data.action_dim, data.r_max,
                             train_config(config), log);
    stack.config_hash = config.hash();
    return stack;
}

double normalized_score(double score, double random_score, double greedy_score) {
    const double span = greedy_score - random_score;
    if (std::abs(span) < 1e-12) return 0.0;
    return 100.0 * (score - random_score) / span;
}

namespace {

struct EpisodeResult {
    bool reached = false;
    double reward = 0.0;
    double length = 0.0;
};

EpisodeResult run_planner_episode(const DiffusionStack& stack, const EncodingTree& tree, const MazeEnv& env,
                                  const Config& config, std::uint64_t seed) {
    Rng env_rng(derive_seed(seed, "env"));
    Rng plan_rng(derive_seed(seed, "plan"));
    Cell cell = env.start();
    const Vec s0 = env.observe(cell, env_rng);
    EpisodeResult r;
    PlanHooks hooks;
    hooks.env_step = [&](const Vec&, const Vec& action) {
        cell = env.apply(cell, action);
        return env.observe(cell, env_rng);
    };
    hooks.done = [&](const Vec&) { return cell == env.goal(); };
    hooks.patience = static_cast<std::size_t>(config.subgoal_patience);
    SubgoalCriterion criterion{config.goal_tolerance, {}};
    const auto result = plan(stack, tree, s0, static_cast<std::size_t>(config.horizon), criterion, plan_rng, hooks);
    r.reached = cell == env.goal();
    r.reward = r.reached ? env.goal_reward : 0.0;
    r.length = static_cast<double>(result.actions.size());
    return r;
}

PolicyStats summarize(const std::vector<EpisodeResult>& eps) {
    PolicyStats s;
    if (eps.empty()) return s;
    for (const auto& e : eps) {
        s.goal_rate += e.reached ? 1.0 : 0.0;
        s.mean_reward += e.reward;
        s.mean_length += e.length;
    }
    const double n = static_cast<double>(eps.size());
    s.goal_rate /= n;
    s.mean_reward /= n;
    s.mean_length /= n;
    return s;
}

EpisodeResult from_outcome(const EpisodeOutcome& o) {
    return {o.reached_goal, o.total_reward, static_cast<double>(o.steps)};
}

std::pair<double, double> mean_std(const Vec& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

nlohmann::ordered_json stats_json(const PolicyStats& s) {
    nlohmann::ordered_json j;
    j["goal_rate"] = s.goal_rate;
    j["mean_reward"] = s.mean_reward;
    j["mean_length"] = s.mean_length;
    return j;
}

PolicyStats stats_from_json(const nlohmann::json& j) {
    return {j.at("goal_rate").get<double>(), j.at("mean_reward").get<double>(), j.at("mean_length").get<double>()};
}

}  // namespace

EvalReport evaluate(const DiffusionStack& stack, const EncodingTree& tree, const MazeEnv& env, const Config& config,
                    std::size_t episodes, std::size_t seeds) {
    std::vector<SeedReport> per_seed;
    const int horizon = config.horizon;
    for (std::size_t si = 0; si < seeds; ++si) {
        SeedReport sr;
        sr.seed_index = si;
        sr.seed = derive_seed(config.seed, "eval", si);
        sr.episodes = episodes;
        std::vector<EpisodeResult> planner(episodes), random(episodes), greedy(episodes);
        const auto n = static_cast<long>(episodes);
#pragma omp parallel for schedule(dynamic, 1)
        for (long e = 0; e < n; ++e) {
            const auto ep = static_cast<std::size_t>(e);
            const std::uint64_t seed = derive_seed(sr.seed, "episode", ep);
            planner[ep] = run_planner_episode(stack, tree, env, config, seed);
            Rng rr(derive_seed(seed, "random"));
            random[ep] = from_outcome(run_random_policy(env, horizon, rr));
            Rng gr(derive_seed(seed, "greedy"));
            greedy[ep] = from_outcome(run_greedy_policy(env, horizon, gr));
        }
        sr.planner = summarize(planner);
        sr.random = summarize(random);
        sr.greedy = summarize(greedy);
        sr.normalized_score = normalized_score(sr.planner.mean_reward, sr.random.mean_reward, sr.greedy.mean_reward);
        per_seed.push_back(sr);
    }
    return aggregate(std::move(per_seed), config.hash());
}

EvalReport aggregate(std::vector<SeedReport> per_seed, std::uint64_t config_hash) {
    EvalReport r;
    r.config_hash = config_hash;
    Vec goal, score;
    double weighted_reward = 0.0, weighted_length = 0.0, random_goal = 0.0, greedy_goal = 0.0;
    for (const auto& s : per_seed) {
        r.episodes += s.episodes;
        if (s.episodes == 0) continue;
        const double n = static_cast<double>(s.episodes);
        goal.push_back(s.planner.goal_rate);
        score.push_back(s.normalized_score);
        weighted_reward += s.planner.mean_reward * n;
        weighted_length += s.planner.mean_length * n;
        random_goal += s.random.goal_rate * n;
        greedy_goal += s.greedy.goal_rate * n;
    }
    r.zero_episodes = r.episodes == 0;
    if (!r.zero_episodes) {
        const double n = static_cast<double>(r.episodes);
        std::tie(r.goal_rate, r.goal_rate_std) = mean_std(goal);
        std::tie(r.normalized_score, r.normalized_score_std) = mean_std(score);
        r.mean_reward = weighted_reward / n;
        r.mean_length = weighted_length / n;
        r.random_goal_rate = random_goal / n;
        r.greedy_goal_rate = greedy_goal / n;
    }
    r.per_seed = std::move(per_seed);
    return r;
}

std::string seed_report_to_json(const SeedReport& r) {
    nlohmann::ordered_json j;
    j["seed_index"] = r.seed_index;
    j["seed"] = r.seed;
    j["episodes"] = r.episodes;
    j["planner"] = stats_json(r.planner);
    j["random"] = stats_json(r.random);
    j["greedy"] = stats_json(r.greedy);
    j["normalized_score"] = r.normalized_score;
    return j.dump(2) + "\n";
}

SeedReport seed_report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        SeedReport r;
        r.seed_index = j.at("seed_index").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.episodes = j.at("episodes").get<std::size_t>();
        r.planner = stats_from_json(j.at("planner"));
        r.random = stats_from_json(j.at("random"));
        r.greedy = stats_from_json(j.at("greedy"));
        r.normalized_score = j.at("normalized_score").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid seed report: ") + e.what());
    }
}

std::string eval_report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["config_hash"] = hex64(r.config_hash);
    j["episodes"] = r.episodes;
    j["zero_episodes"] = r.zero_episodes;
    j["goal_reach_rate"] = r.goal_rate;
    j["goal_reach_rate_std"] = r.goal_rate_std;
    j["mean_cumulative_reward"] = r.mean_reward;
    j["mean_episode_length"] = r.mean_length;
    j["normalized_score"] = r.normalized_score;
    j["normalized_score_std"] = r.normalized_score_std;
    j["random_goal_reach_rate"] = r.random_goal_rate;
    j["greedy_goal_reach_rate"] = r.greedy_goal_rate;
    auto seeds = nlohmann::ordered_json::array();
    for (const auto& s : r.per_seed) seeds.push_back(nlohmann::ordered_json::parse(seed_report_to_json(s)));
    j["per_seed"] = std::move(seeds);
    return j.dump(2) + "\n";
}

namespace {

std::string config_subset(const Config& c, const std::vector<std::string>& keys) {
    std::map<std::string, std::string> all;
    std::istringstream in(c.to_text());
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        all[line.substr(0, eq)] = line.substr(eq + 3);
    }
    std::string out;
    for (const auto& k : keys) out += k + "=" + all.at(k) + "\n";
    return out;
}

class Stages {
public:
    Stages(const Config& config, fs::path dir, std::ostream* log) : config_(config), dir_(std::move(dir)), log_(log) {
        const auto manifest = dir_ / "manifest.json";
        if (fs::exists(manifest)) {
            try {
                manifest_ = nlohmann::ordered_json::parse(read_file(manifest.string()));
            } catch (const nlohmann::json::exception&) {
                manifest_ = nlohmann::ordered_json::object();
            }
        }
        if (!manifest_.is_object()) manifest_ = nlohmann::ordered_json::object();
    }

    // Produces `file` unless the manifest shows it was built from the same inputs.
    template <typename F>
    std::string run(const std::string& name, const std::string& file, const std::vector<std::string>& keys,
                    const std::vector<std::string>& inputs, F&& produce) {
        const fs::path path = dir_ / file;
        std::string key_text = name + "\n" + config_subset(config_, keys);
        for (const auto& in : inputs) key_text += in + "=" + hashes_.at(in) + "\n";
        const std::string input_hash = hex64(fnv1a(key_text));
        bool skip = false;
        if (fs::exists(path) && manifest_.contains("stages") && manifest_["stages"].contains(name)) {
            const auto& entry = manifest_["stages"][name];
            skip = entry.value("input_hash", "") == input_hash &&
                   entry.value("artifact_hash", "") == hex64(fnv1a(read_file(path.string())));
        }
        if (!skip) {
            try {
                write_file(path.string(), produce());
            } catch (const ValidationError& e) {
                throw ValidationError("stage " + name + " (" + path.string() + "): " + e.what());
            } catch (const std::exception& e) {
                throw StageError("stage " + name + " (" + path.string() + "): " + e.what());
            }
        }
        const std::string contents = read_file(path.string());
        const std::string artifact_hash = hex64(fnv1a(contents));
        hashes_[name] = artifact_hash;
        manifest_["stages"][name] = {{"artifact", file}, {"input_hash", input_hash}, {"artifact_hash", artifact_hash}};
        status_.push_back({name, path.string(), skip});
        if (log_) *log_ << (skip ? "skip " : "done ") << name << " -> " << path.string() << "\n";
        return contents;
    }

    void write_manifest() {
        manifest_["version"] = kVersion;
        manifest_["config_hash"] = hex64(config_.hash());
        manifest_["seed"] = config_.seed;
        write_file((dir_ / "manifest.json").string(), manifest_.dump(2) + "\n");
    }

    const std::vector<StageStatus>& status() const { return status_; }

private:
    const Config& config_;
    fs::path dir_;
    std::ostream* log_;
    nlohmann::ordered_json manifest_;
    std::map<std::string, std::string> hashes_;
    std::vector<StageStatus> status_;
};

}  // namespace

PipelineResult run_pipeline(const Config& config, const std::string& workdir, std::ostream* log) {
    config.validate();
    const fs::path dir(workdir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw StageError("workdir is not writable: " + workdir);
    Stages stages(config, dir, log);

    const std::string env_text = stages.run(
        "env", "env.json",
        {"maze", "grid_width", "grid_height", "env_jitter", "goal_reward", "max_episode_steps"}, {},
        [&] { return env_to_json(make_env(config)); });
    const MazeEnv env = env_from_json(env_text);

    const std::string data_text = stages.run("synth", "dataset.jsonl", {"seed", "episodes", "collector_noise"}, {"env"}, [&] {
        return dataset_to_jsonl(
            synthesize_dataset(env, config.episodes, config.collector_noise, derive_seed(config.seed, "synth")));
    });
    std::istringstream data_in(data_text);
    const Dataset data = parse_dataset(data_in);

    const std::string graph_text =
        stages.run("graph", "graph.json", {"dedupe_tol", "similarity", "symmetrize", "k_min", "k_max"}, {"synth"},
                   [&] { return graph_to_json(build_graph(data, config).graph); });
    const StateGraph graph = graph_from_json(graph_text);

    const std::string tree_text = stages.run("partition", "tree.json", {"tree_height"}, {"graph"},
                                             [&] { return tree_to_json(build_tree(graph, config)); });
    const EncodingTree tree = tree_from_json(tree_text);

    const std::string seg_text = stages.run("segment", "segments.json", {}, {"synth", "partition"},
                                            [&] { return hierarchies_to_json(segment_dataset(data, tree)); });
    const auto hierarchies = hierarchies_from_json(seg_text);

    const std::string model_bytes = stages.run(
        "train", "model.bin",
        {"seed", "diffusion_steps", "schedule", "guidance_weight", "guidance_mode", "reg_eta", "pad_len", "p_uncond",
         "kde_refresh", "kde_samples", "hidden_width", "cond_dim", "step_dim", "train_steps", "batch_size",
         "learning_rate", "ema_decay"},
        {"synth", "partition", "segment"}, [&] { return checkpoint_bytes(train_model(data, tree, hierarchies, config)); });
    const DiffusionStack stack = parse_checkpoint(model_bytes);

    EvalReport report;
    const std::string report_text = stages.run(
        "eval", "report.json", {"seed", "goal_tolerance", "horizon", "subgoal_patience", "eval_seeds", "eval_episodes"},
        {"env", "partition", "train"}, [&] {
            report = evaluate(stack, tree, env, config, static_cast<std::size_t>(config.eval_episodes),
                              static_cast<std::size_t>(config.eval_seeds));
            for (const auto& s : report.per_seed) {
                write_file((dir / ("eval_seed_" + std::to_string(s.seed_index) + ".json")).string(),
                           seed_report_to_json(s));
            }
            return eval_report_to_json(report);
        });
    if (report.per_seed.empty() && config.eval_seeds > 0) {
        std::vector<SeedReport> per_seed;
        const auto j = nlohmann::json::parse(report_text);
        for (const auto& s : j.at("per_seed")) per_seed.push_back(seed_report_from_json(s.dump()));
        report = aggregate(std::move(per_seed), config.hash());
    }
    stages.write_manifest();
    return {report, stages.status()};
}

}  // namespace sihd
