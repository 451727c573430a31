#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sihd/checkpoint.hpp"
#include "sihd/pipeline.hpp"

using namespace sihd;
namespace fs = std::filesystem;

namespace {

Config resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config c = path.empty() ? Config{} : load_config(path);
    apply_overrides(c, overrides);
    return c;
}

std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

// <out>.manifest.json: what produced the artifact and from which inputs.
void write_manifest(const std::string& command, const std::string& out, const std::vector<std::string>& inputs,
                    const Config* config, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["command"] = command;
    j["seed"] = seed;
    if (config) j["config_hash"] = hex64(config->hash());
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& p : inputs) in[p] = file_hash(p);
    j["inputs"] = std::move(in);
    j["artifact"] = {{"path", out}, {"hash", file_hash(out)}};
    write_file(out + ".manifest.json", j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Structural-entropy hierarchical diffusion planner"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file");
        cmd->add_option("--set", overrides, "override, key=value (repeatable)");
    };

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize an offline maze dataset");
    std::vector<int> grid{8, 8};
    std::string walls_path, synth_out, env_out;
    int episodes = 200;
    double noise = 0.3, jitter = 0.0;
    std::uint64_t seed = 0;
    synth->add_option("--grid", grid, "grid width and height")->expected(2);
    synth->add_option("--walls", walls_path, "maze text file ('#' wall, '.' free, 'S' start, 'G' goal)");
    synth->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
    synth->add_option("--noise", noise)->check(CLI::Range(0.0, 1.0));
    synth->add_option("--jitter", jitter)->check(CLI::Range(0.0, 0.49));
    synth->add_option("--seed", seed);
    synth->add_option("--out", synth_out)->required();
    synth->add_option("--env-out", env_out, "environment file (default: env.json beside --out)");

    // graph
    auto* graph_cmd = app.add_subcommand("graph", "build the k-NN state graph");
    std::string data_path, graph_out, similarity = "rbf";
    int k_min = 2, k_max = 16;
    double dedupe_tol = 1e-9;
    graph_cmd->add_option("--data", data_path)->required();
    graph_cmd->add_option("--similarity", similarity)->check(CLI::IsMember({"cosine", "rbf"}));
    graph_cmd->add_option("--k-min", k_min)->check(CLI::PositiveNumber);
    graph_cmd->add_option("--k-max", k_max)->check(CLI::PositiveNumber);
    graph_cmd->add_option("--dedupe-tol", dedupe_tol)->check(CLI::NonNegativeNumber);
    graph_cmd->add_option("--out", graph_out)->required();

    // partition
    auto* part = app.add_subcommand("partition", "optimize the encoding tree");
    std::string graph_path, tree_out;
    int height = 3;
    part->add_option("--graph", graph_path)->required();
    part->add_option("--height", height);
    part->add_option("--out", tree_out)->required();

    // segment
    auto* seg = app.add_subcommand("segment", "segment trajectories hierarchically");
    std::string tree_path, seg_out;
    seg->add_option("--data", data_path)->required();
    seg->add_option("--tree", tree_path)->required();
    seg->add_option("--out", seg_out)->required();

    // train
    auto* train = app.add_subcommand("train", "train the per-layer diffusion models");
    std::string model_out, segments_path, log_out;
    train->add_option("--data", data_path)->required();
    train->add_option("--tree", tree_path)->required();
    train->add_option("--segments", segments_path, "precomputed segments (default: recomputed)");
    train->add_option("--out", model_out)->required();
    train->add_option("--log", log_out, "training log JSON");
    add_config(train);

    // plan
    auto* plan_cmd = app.add_subcommand("plan", "plan from the environment start state");
    std::string model_path, env_path, plan_out;
    int horizon = 64;
    double tolerance = 0.5;
    std::size_t patience = 8;
    plan_cmd->add_option("--model", model_path)->required();
    plan_cmd->add_option("--tree", tree_path)->required();
    plan_cmd->add_option("--env", env_path)->required();
    plan_cmd->add_option("--horizon", horizon)->check(CLI::NonNegativeNumber);
    plan_cmd->add_option("--seed", seed);
    plan_cmd->add_option("--tolerance", tolerance)->check(CLI::PositiveNumber);
    plan_cmd->add_option("--patience", patience);
    plan_cmd->add_option("--out", plan_out)->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate the planner against random and greedy baselines");
    std::string report_out, per_seed_dir;
    int eval_episodes = -1, eval_seeds = -1;
    eval_cmd->add_option("--model", model_path)->required();
    eval_cmd->add_option("--tree", tree_path)->required();
    eval_cmd->add_option("--env", env_path)->required();
    eval_cmd->add_option("--episodes", eval_episodes, "episodes per seed (default from config)");
    eval_cmd->add_option("--seeds", eval_seeds, "number of seeds (default from config)");
    eval_cmd->add_option("--out", report_out)->required();
    eval_cmd->add_option("--per-seed-dir", per_seed_dir, "directory for eval_seed_<i>.json files");
    add_config(eval_cmd);

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "run every stage end to end");
    std::string workdir;
    pipe->add_option("--workdir", workdir)->required();
    add_config(pipe);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth) {
            MazeEnv env = walls_path.empty() ? MazeEnv::open(grid[0], grid[1])
                                             : MazeEnv::from_text(read_file(walls_path), grid[0], grid[1]);
            env.jitter = jitter;
            env.validate();
            if (env_out.empty()) env_out = (fs::path(synth_out).parent_path() / "env.json").string();
            write_file(env_out, env_to_json(env));
            save_dataset(synthesize_dataset(env, episodes, noise, seed), synth_out);
            write_manifest("synth", synth_out, walls_path.empty() ? std::vector<std::string>{} : std::vector{walls_path},
                           nullptr, seed);
        } else if (*graph_cmd) {
            Config c;
            c.similarity = similarity;
            c.k_min = k_min;
            c.k_max = k_max;
            c.dedupe_tol = dedupe_tol;
            c.validate();
            const auto sel = build_graph(load_dataset(data_path), c);
            write_file(graph_out, graph_to_json(sel.graph));
            std::cout << "k = " << sel.k << ", vertices = " << sel.graph.size() << ", edges = " << sel.graph.edge_count()
                      << "\n";
            write_manifest("graph", graph_out, {data_path}, nullptr, 0);
        } else if (*part) {
            if (height < 2) throw ValidationError("--height must be at least 2");
            const auto graph = graph_from_json(read_file(graph_path));
            std::vector<double> trace;
            const auto tree = hcse_optimize(graph, static_cast<std::size_t>(height), &trace);
            write_file(tree_out, tree_to_json(tree));
            std::cout << "height = " << tree.height() << ", entropy = " << trace.back() << " bits\n";
            write_manifest("partition", tree_out, {graph_path}, nullptr, 0);
        } else if (*seg) {
            const auto tree = tree_from_json(read_file(tree_path));
            write_file(seg_out, hierarchies_to_json(segment_dataset(load_dataset(data_path), tree)));
            write_manifest("segment", seg_out, {data_path, tree_path}, nullptr, 0);
        } else if (*train) {
            const Config c = resolve_config(config_path, overrides);
            const auto data = load_dataset(data_path);
            const auto tree = tree_from_json(read_file(tree_path));
            const auto hier =
                segments_path.empty() ? segment_dataset(data, tree) : hierarchies_from_json(read_file(segments_path));
            TrainLog log;
            save_checkpoint(train_model(data, tree, hier, c, &log), model_out);
            if (!log_out.empty()) {
                nlohmann::ordered_json j;
                j["loss"] = log.loss;
                auto reg = nlohmann::ordered_json::array();
                for (const auto& r : log.regularizer) {
                    reg.push_back({{"step", r.step}, {"h_s", r.h_s}, {"lower", r.lower}, {"value", r.value},
                                   {"upper", r.upper}, {"bound_holds", r.bound_holds}});
                }
                j["regularizer"] = std::move(reg);
                write_file(log_out, j.dump() + "\n");
            }
            std::vector<std::string> inputs{data_path, tree_path};
            if (!config_path.empty()) inputs.push_back(config_path);
            write_manifest("train", model_out, inputs, &c, c.seed);
        } else if (*plan_cmd) {
            const auto stack = load_checkpoint(model_path);
            const auto tree = tree_from_json(read_file(tree_path));
            const auto env = env_from_json(read_file(env_path));
            Rng rng(seed);
            const Vec s0 = env.observe(env.start(), rng);
            PlanHooks hooks;
            hooks.patience = patience;
            const auto result =
                plan(stack, tree, s0, static_cast<std::size_t>(horizon), SubgoalCriterion{tolerance, {}}, rng, hooks);
            write_file(plan_out, plan_to_json(result));
            write_manifest("plan", plan_out, {model_path, tree_path, env_path}, nullptr, seed);
        } else if (*eval_cmd) {
            Config c = resolve_config(config_path, overrides);
            if (eval_episodes >= 0) c.eval_episodes = eval_episodes;
            if (eval_seeds >= 0) c.eval_seeds = eval_seeds;
            c.validate();
            const auto stack = load_checkpoint(model_path);
            const auto tree = tree_from_json(read_file(tree_path));
            const auto env = env_from_json(read_file(env_path));
            const auto report = evaluate(stack, tree, env, c, static_cast<std::size_t>(c.eval_episodes),
                                         static_cast<std::size_t>(c.eval_seeds));
            write_file(report_out, eval_report_to_json(report));
            if (!per_seed_dir.empty()) {
                fs::create_directories(per_seed_dir);
                for (const auto& s : report.per_seed) {
                    write_file((fs::path(per_seed_dir) / ("eval_seed_" + std::to_string(s.seed_index) + ".json")).string(),
                               seed_report_to_json(s));
                }
            }
            write_manifest("eval", report_out, {model_path, tree_path, env_path}, &c, c.seed);
        } else if (*pipe) {
            const Config c = resolve_config(config_path, overrides);
            const auto result = run_pipeline(c, workdir, &std::cout);
            std::cout << "goal reach rate " << result.report.goal_rate << " (random " << result.report.random_goal_rate
                      << ", greedy " << result.report.greedy_goal_rate << "), normalized score "
                      << result.report.normalized_score << "\n";
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const StageError& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
