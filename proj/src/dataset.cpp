#include "sihd/dataset.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace sihd {

using nlohmann::json;

double cumulative_reward(const Trajectory& traj) {
    double s = 0.0;
    for (double r : traj.rewards) s += r;
    return s;
}

namespace {

void check_finite(const Vec& v, const char* what, std::size_t traj, std::size_t t) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw ValidationError("trajectory " + std::to_string(traj) + ": non-finite " + what +
                                  " at step " + std::to_string(t));
        }
    }
}

void validate(const Trajectory& tr, std::size_t idx, std::size_t d, std::size_t m) {
    const std::size_t n = tr.states.size();
    if (n < 2) throw ValidationError("trajectory " + std::to_string(idx) + ": fewer than 2 steps");
    if (tr.actions.size() != n || tr.rewards.size() != n) {
        throw ValidationError("trajectory " + std::to_string(idx) +
                              ": states/actions/rewards length mismatch");
    }
    for (std::size_t t = 0; t < n; ++t) {
        if (tr.states[t].size() != d) {
            throw ValidationError("dimension mismatch: trajectory " + std::to_string(idx) + " step " +
                                  std::to_string(t) + " state has dimension " +
                                  std::to_string(tr.states[t].size()) + ", expected " + std::to_string(d));
        }
        if (tr.actions[t].size() != m) {
            throw ValidationError("dimension mismatch: trajectory " + std::to_string(idx) + " step " +
                                  std::to_string(t) + " action has dimension " +
                                  std::to_string(tr.actions[t].size()) + ", expected " + std::to_string(m));
        }
        check_finite(tr.states[t], "state", idx, t);
        check_finite(tr.actions[t], "action", idx, t);
        if (!std::isfinite(tr.rewards[t])) {
            throw ValidationError("trajectory " + std::to_string(idx) + ": non-finite reward");
        }
    }
}

std::vector<Vec> parse_rows(const json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_array()) throw ValidationError(std::string("missing array field '") + key + "'");
    std::vector<Vec> rows;
    for (const auto& row : j[key]) {
        if (!row.is_array()) throw ValidationError(std::string("field '") + key + "' must hold arrays");
        Vec v;
        for (const auto& x : row) {
            if (!x.is_number()) throw ValidationError(std::string("non-numeric entry in '") + key + "'");
            v.push_back(x.get<double>());
        }
        rows.push_back(std::move(v));
    }
    return rows;
}

void append_row(std::string& out, const Vec& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += format_double(v[i]);
    }
    out += ']';
}

}  // namespace

Dataset make_dataset(std::vector<Trajectory> trajectories) {
    if (trajectories.empty()) throw ValidationError("empty dataset");
    Dataset ds;
    const auto& first = trajectories.front();
    if (first.states.empty() || first.actions.empty()) throw ValidationError("trajectory 0: empty");
    ds.state_dim = first.states.front().size();
    ds.action_dim = first.actions.front().size();
    if (ds.state_dim == 0) throw ValidationError("state dimension must be positive");
    ds.r_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        validate(trajectories[i], i, ds.state_dim, ds.action_dim);
        ds.r_max = std::max(ds.r_max, cumulative_reward(trajectories[i]));
    }
    ds.trajectories = std::move(trajectories);
    return ds;
}

Dataset parse_dataset(std::istream& in) {
    std::vector<Trajectory> trajs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            Trajectory tr;
            tr.states = parse_rows(j, "states");
            tr.actions = parse_rows(j, "actions");
            if (!j.contains("rewards") || !j["rewards"].is_array()) throw ValidationError("missing array field 'rewards'");
            for (const auto& r : j["rewards"]) {
                if (!r.is_number()) throw ValidationError("non-numeric reward");
                tr.rewards.push_back(r.get<double>());
            }
            trajs.push_back(std::move(tr));
        } catch (const json::exception& e) {
            throw ValidationError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return make_dataset(std::move(trajs));
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset: " + path);
    return parse_dataset(in);
}

std::string dataset_to_jsonl(const Dataset& ds) {
    std::string out;
    for (const auto& tr : ds.trajectories) {
        out += "{\"states\":[";
        for (std::size_t t = 0; t < tr.states.size(); ++t) {
            if (t) out += ',';
            append_row(out, tr.states[t]);
        }
        out += "],\"actions\":[";
        for (std::size_t t = 0; t < tr.actions.size(); ++t) {
            if (t) out += ',';
            append_row(out, tr.actions[t]);
        }
        out += "],\"rewards\":";
        append_row(out, tr.rewards);
        out += "}\n";
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& path) { write_file(path, dataset_to_jsonl(ds)); }

}  // namespace sihd
