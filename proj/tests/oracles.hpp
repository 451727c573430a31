#pragma once

// Independent reference computations used by the tests. They work on dense
// adjacency matrices and explicit vertex sets, never on library internals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "sihd/encoding_tree.hpp"
#include "sihd/state_graph.hpp"

namespace oracle {

using sihd::Rng;
using Matrix = std::vector<std::vector<double>>;

inline Matrix dense(const sihd::StateGraph& g) {
    Matrix m(g.size(), std::vector<double>(g.size(), 0.0));
    for (const auto& e : g.edges()) m[e.u][e.v] = m[e.v][e.u] = e.w;
    return m;
}

inline sihd::StateGraph random_graph(std::size_t n, double density, Rng& rng, bool connected = true) {
    std::uniform_real_distribution<double> w(0.1, 2.0);
    std::vector<sihd::WeightedEdge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (sihd::uniform01(rng) < density) edges.push_back({i, j, w(rng)});
    if (connected)
        for (std::size_t i = 1; i < n; ++i) edges.push_back({i - 1, i, 0.05 + 0.1 * sihd::uniform01(rng)});
    return sihd::StateGraph::from_edges(n, edges);
}

// Random hierarchy: recursively split a vertex set into random groups.
inline sihd::EncodingTree random_tree(const sihd::StateGraph& g, Rng& rng, std::size_t max_depth = 4) {
    std::vector<sihd::NodeId> parent{sihd::kNoNode};
    std::vector<std::size_t> leaf{sihd::kNoNode};
    std::function<void(sihd::NodeId, std::vector<std::size_t>, std::size_t)> grow =
        [&](sihd::NodeId node, std::vector<std::size_t> verts, std::size_t depth) {
            if (depth + 1 >= max_depth || verts.size() <= 2 || sihd::uniform01(rng) < 0.3) {
                for (std::size_t v : verts) {
                    parent.push_back(node);
                    leaf.push_back(v);
                }
                return;
            }
            std::shuffle(verts.begin(), verts.end(), rng);
            const std::size_t groups = 2 + rng() % std::min<std::size_t>(3, verts.size() - 1);
            std::vector<std::vector<std::size_t>> parts(groups);
            for (std::size_t i = 0; i < verts.size(); ++i) parts[i < groups ? i : rng() % groups].push_back(verts[i]);
            for (auto& p : parts) {
                const sihd::NodeId child = parent.size();
                parent.push_back(node);
                leaf.push_back(sihd::kNoNode);
                grow(child, p, depth + 1);
            }
        };
    std::vector<std::size_t> all(g.size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = v;
    grow(0, all, 0);
    return sihd::EncodingTree::from_parents(g, parent, leaf);
}

// Literal structural entropy: every non-root node's vertex set, its volume,
// its boundary weight and its parent's volume, all from set membership.
inline double entropy(const Matrix& w, const std::vector<std::set<std::size_t>>& sets,
                      const std::vector<long>& parent_of) {
    const std::size_t n = w.size();
    std::vector<double> deg(n, 0.0);
    double vol = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) deg[i] += w[i][j];
        vol += deg[i];
    }
    auto volume = [&](const std::set<std::size_t>& s) {
        double v = 0.0;
        for (auto x : s) v += deg[x];
        return v;
    };
    double h = 0.0;
    for (std::size_t a = 0; a < sets.size(); ++a) {
        if (parent_of[a] < 0) continue;
        double cut = 0.0;
        for (auto u : sets[a])
            for (std::size_t v = 0; v < n; ++v)
                if (!sets[a].count(v)) cut += w[u][v];
        const double va = volume(sets[a]);
        const double vp = volume(sets[static_cast<std::size_t>(parent_of[a])]);
        if (cut > 0.0 && va > 0.0 && vp > 0.0) h -= cut / vol * std::log2(va / vp);
    }
    return h;
}

inline double entropy(const sihd::StateGraph& g, const sihd::EncodingTree& t) {
    std::vector<std::set<std::size_t>> sets;
    std::vector<long> parents;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sets.emplace_back(t.node(i).vertices.begin(), t.node(i).vertices.end());
        parents.push_back(t.node(i).parent == sihd::kNoNode ? -1 : static_cast<long>(t.node(i).parent));
    }
    return entropy(dense(g), sets, parents);
}

// Entropy of the 2-level tree root -> communities -> leaves.
inline double two_level_entropy(const Matrix& w, const std::vector<int>& label) {
    const std::size_t n = w.size();
    const int groups = *std::max_element(label.begin(), label.end()) + 1;
    std::vector<std::set<std::size_t>> sets(1);
    std::vector<long> parents{-1};
    for (std::size_t v = 0; v < n; ++v) sets[0].insert(v);
    for (int c = 0; c < groups; ++c) {
        std::set<std::size_t> s;
        for (std::size_t v = 0; v < n; ++v)
            if (label[v] == c) s.insert(v);
        sets.push_back(s);
        parents.push_back(0);
    }
    for (std::size_t v = 0; v < n; ++v) {
        sets.push_back({v});
        parents.push_back(1 + label[v]);
    }
    return entropy(w, sets, parents);
}

// Minimum over every set partition (restricted growth strings).
inline double exhaustive_two_level(const Matrix& w) {
    const std::size_t n = w.size();
    std::vector<int> label(n, 0);
    double best = INFINITY;
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
        if (i == n) {
            best = std::min(best, two_level_entropy(w, label));
            return;
        }
        for (int c = 0; c <= used && c < static_cast<int>(n); ++c) {
            label[i] = c;
            rec(i + 1, std::max(used, c + 1));
        }
    };
    label[0] = 0;
    rec(1, 1);
    return best;
}

}  // namespace oracle
