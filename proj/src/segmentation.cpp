#include "sihd/segmentation.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"

namespace sihd {

std::vector<std::size_t> SegmentHierarchy::subgoal_steps(std::size_t h) const {
    std::vector<std::size_t> out;
    for (const auto& s : layer(h)) out.push_back(s.subgoal_step());
    return out;
}

std::pair<std::size_t, std::size_t> SegmentHierarchy::children(std::size_t h, std::size_t i) const {
    if (h < 2 || h > height()) throw ValidationError("children: layer out of range");
    const auto& parent = layer(h).at(i);
    const auto& finer = layer(h - 1);
    auto first = std::lower_bound(finer.begin(), finer.end(), parent.begin,
                                  [](const Segment& s, std::size_t t) { return s.begin < t; });
    auto last = std::lower_bound(first, finer.end(), parent.end,
                                 [](const Segment& s, std::size_t t) { return s.begin < t; });
    return {static_cast<std::size_t>(first - finer.begin()), static_cast<std::size_t>(last - finer.begin())};
}

std::vector<std::size_t> SegmentHierarchy::child_subgoal_steps(std::size_t h, std::size_t i) const {
    const auto [first, last] = children(h, i);
    std::vector<std::size_t> out;
    for (std::size_t j = first; j < last; ++j) out.push_back(layer(h - 1)[j].subgoal_step());
    return out;
}

std::vector<std::size_t> resolve_vertices(const std::vector<Vec>& states, const std::vector<Vec>& vertices, double tol) {
    std::map<Vec, std::size_t> exact;
    for (std::size_t v = 0; v < vertices.size(); ++v) exact.emplace(vertices[v], v);
    std::vector<std::size_t> out;
    out.reserve(states.size());
    for (std::size_t t = 0; t < states.size(); ++t) {
        if (auto it = exact.find(states[t]); it != exact.end()) {
            out.push_back(it->second);
            continue;
        }
        std::size_t found = kNoNode;
        for (std::size_t v = 0; v < vertices.size() && found == kNoNode; ++v) {
            if (vertices[v].size() == states[t].size() && linf_distance(vertices[v], states[t]) <= tol) found = v;
        }
        if (found == kNoNode) throw ValidationError("unmapped state at timestep " + std::to_string(t));
        out.push_back(found);
    }
    return out;
}

std::vector<Segment> segment_layer(const std::vector<std::size_t>& vertex_ids, const LayerPartition& partition) {
    std::vector<Segment> out;
    for (std::size_t t = 0; t < vertex_ids.size(); ++t) {
        if (vertex_ids[t] >= partition.community_of.size()) {
            throw ValidationError("unmapped state at timestep " + std::to_string(t));
        }
        const NodeId c = partition.community_of[vertex_ids[t]];
        if (out.empty() || out.back().community != c) {
            out.push_back({partition.h, out.size(), t, t + 1, c});
        } else {
            out.back().end = t + 1;
        }
    }
    return out;
}

std::vector<std::size_t> boundaries(const std::vector<Segment>& layer) {
    std::vector<std::size_t> out;
    for (const auto& s : layer) out.push_back(s.begin);
    return out;
}

SegmentHierarchy build_hierarchy(const std::vector<std::size_t>& vertex_ids, const EncodingTree& tree) {
    const std::size_t K = tree.height();
    if (K < 2) throw ValidationError("segmentation needs a tree of height at least 2");
    if (vertex_ids.empty()) throw ValidationError("cannot segment an empty trajectory");
    const std::size_t T = vertex_ids.size();
    SegmentHierarchy hier;
    hier.trajectory_length = T;
    hier.layers.resize(K);
    hier.layers[K - 1] = {Segment{K, 0, 0, T, EncodingTree::kRoot}};

    std::set<std::size_t> cuts;  // boundaries inherited from coarser layers
    for (std::size_t h = K - 1; h >= 1; --h) {
        const auto partition = layer_partition(tree, h);
        for (const auto& s : segment_layer(vertex_ids, partition)) cuts.insert(s.begin);
        auto& layer = hier.layers[h - 1];
        std::vector<std::size_t> starts(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i < starts.size(); ++i) {
            const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : T;
            layer.push_back({h, i, starts[i], end, partition.community_of[vertex_ids[starts[i]]]});
        }
    }
    return hier;
}

SegmentHierarchy build_hierarchy(const Trajectory& traj, const EncodingTree& tree) {
    return build_hierarchy(resolve_vertices(traj.states, tree.vertex_states, tree.dedupe_tol), tree);
}

PaddedSequence pad_sequence(const std::vector<Vec>& seq, std::size_t target_len) {
    if (seq.empty()) throw ValidationError("cannot pad an empty sequence");
    if (seq.size() > target_len) {
        throw ValidationError("sequence length " + std::to_string(seq.size()) + " overflows pad length " +
                              std::to_string(target_len));
    }
    PaddedSequence out{seq, std::vector<bool>(seq.size(), true)};
    out.values.resize(target_len, seq.back());
    out.mask.resize(target_len, false);
    return out;
}

std::vector<Vec> unpad(const PaddedSequence& padded) {
    std::vector<Vec> out;
    for (std::size_t i = 0; i < padded.values.size(); ++i)
        if (padded.mask[i]) out.push_back(padded.values[i]);
    return out;
}

std::vector<std::vector<Vec>> split_chunks(const std::vector<Vec>& seq, std::size_t target_len) {
    if (target_len == 0) throw ValidationError("pad length must be positive");
    std::vector<std::vector<Vec>> out;
    for (std::size_t i = 0; i < seq.size(); i += target_len) {
        const auto last = std::min(seq.size(), i + target_len);
        out.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(last));
    }
    return out;
}

std::string hierarchies_to_json(const std::vector<SegmentHierarchy>& hierarchies) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& hier : hierarchies) {
        nlohmann::ordered_json jt;
        jt["length"] = hier.trajectory_length;
        auto layers = nlohmann::ordered_json::array();
        for (std::size_t h = 1; h <= hier.height(); ++h) {
            nlohmann::ordered_json jl;
            jl["h"] = h;
            jl["boundaries"] = boundaries(hier.layer(h));
            jl["subgoal_steps"] = hier.subgoal_steps(h);
            std::vector<std::size_t> comms;
            for (const auto& s : hier.layer(h)) comms.push_back(s.community);
            jl["communities"] = comms;
            layers.push_back(std::move(jl));
        }
        jt["layers"] = std::move(layers);
        arr.push_back(std::move(jt));
    }
    nlohmann::ordered_json j;
    j["trajectories"] = std::move(arr);
    return j.dump() + "\n";
}

std::vector<SegmentHierarchy> hierarchies_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        std::vector<SegmentHierarchy> out;
        for (const auto& jt : j.at("trajectories")) {
            SegmentHierarchy hier;
            hier.trajectory_length = jt.at("length").get<std::size_t>();
            for (const auto& jl : jt.at("layers")) {
                const auto h = jl.at("h").get<std::size_t>();
                const auto starts = jl.at("boundaries").get<std::vector<std::size_t>>();
                const auto comms = jl.at("communities").get<std::vector<std::size_t>>();
                if (starts.empty() || starts.front() != 0 || comms.size() != starts.size()) {
                    throw ValidationError("segments file: malformed layer " + std::to_string(h));
                }
                std::vector<Segment> layer;
                for (std::size_t i = 0; i < starts.size(); ++i) {
                    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : hier.trajectory_length;
                    if (end <= starts[i]) throw ValidationError("segments file: boundaries not increasing");
                    layer.push_back({h, i, starts[i], end, comms[i]});
                }
                hier.layers.push_back(std::move(layer));
            }
            out.push_back(std::move(hier));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid segments file: ") + e.what());
    }
}

}  // namespace sihd
