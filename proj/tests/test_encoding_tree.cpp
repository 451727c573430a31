#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "sihd/encoding_tree.hpp"

using namespace sihd;

namespace {

StateGraph bridge_triangles() {
    return StateGraph::from_edges(6, {{0, 1, 1}, {0, 2, 1}, {1, 2, 1}, {3, 4, 1}, {3, 5, 1}, {4, 5, 1}, {2, 3, 1}});
}

// root -> one community per group -> leaves.
EncodingTree two_level(const StateGraph& g, const std::vector<int>& label) {
    const int groups = *std::max_element(label.begin(), label.end()) + 1;
    std::vector<NodeId> parent{kNoNode};
    std::vector<std::size_t> leaf{kNoNode};
    for (int c = 0; c < groups; ++c) {
        parent.push_back(0);
        leaf.push_back(kNoNode);
    }
    for (std::size_t v = 0; v < label.size(); ++v) {
        parent.push_back(1 + static_cast<NodeId>(label[v]));
        leaf.push_back(v);
    }
    return EncodingTree::from_parents(g, parent, leaf);
}

StateGraph cliques_with_bridge(std::size_t size) {
    std::vector<WeightedEdge> e;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < size; ++i)
            for (std::size_t j = i + 1; j < size; ++j) e.push_back({c * size + i, c * size + j, 1.0});
    e.push_back({size - 1, size, 1.0});
    return StateGraph::from_edges(2 * size, e);
}

StateGraph complete(std::size_t n) {
    std::vector<WeightedEdge> e;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) e.push_back({i, j, 1.0});
    return StateGraph::from_edges(n, e);
}

StateGraph planted_blocks(const std::vector<int>& label, Rng& rng) {
    std::vector<WeightedEdge> e;
    for (std::size_t i = 0; i < label.size(); ++i)
        for (std::size_t j = i + 1; j < label.size(); ++j) {
            if (label[i] == label[j]) e.push_back({i, j, 1.0 + 0.2 * uniform01(rng)});
            else if (uniform01(rng) < 0.15) e.push_back({i, j, 0.05});
        }
    return StateGraph::from_edges(label.size(), e);
}

// Vertex groups of a partition, as a set of sets (label-free comparison).
std::set<std::set<std::size_t>> groups_of(const std::vector<NodeId>& community_of) {
    std::map<NodeId, std::set<std::size_t>> m;
    for (std::size_t v = 0; v < community_of.size(); ++v) m[community_of[v]].insert(v);
    std::set<std::set<std::size_t>> out;
    for (auto& [_, s] : m) out.insert(s);
    return out;
}

std::set<std::set<std::size_t>> groups_of(const std::vector<int>& label) {
    std::vector<NodeId> ids(label.begin(), label.end());
    return groups_of(ids);
}

}  // namespace

TEST_CASE("flat tree entropy equals the degree entropy") {
    const StateGraph cycle = StateGraph::from_edges(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {0, 3, 1}});
    const EncodingTree t = flat_tree(cycle);
    CHECK(t.size() == 5);
    CHECK(t.height() == 1);
    CHECK(tree_entropy(cycle, t) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(tree_entropy(cycle, t) == doctest::Approx(one_dim_entropy(cycle)).epsilon(1e-12));

    const StateGraph edge = StateGraph::from_edges(2, {{0, 1, 1}});
    CHECK(flat_tree(edge).size() == 3);
    CHECK(tree_entropy(edge, flat_tree(edge)) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        const StateGraph g = oracle::random_graph(3 + rng() % 8, 0.4, rng);
        CHECK_FALSE(check_tree(flat_tree(g), &g).has_value());
        CHECK(tree_entropy(g, flat_tree(g)) == doctest::Approx(one_dim_entropy(g)).epsilon(1e-12));
    }
}

TEST_CASE("bridge-triangle two-level entropy") {
    const StateGraph g = bridge_triangles();
    const EncodingTree t = two_level(g, {0, 0, 0, 1, 1, 1});
    const double per_triangle = 2 * (2.0 / 14) * std::log2(7.0 / 2) + (3.0 / 14) * std::log2(7.0 / 3);
    const double expected = 2.0 / 14 + 2 * per_triangle;
    CHECK(tree_entropy(g, t) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(tree_entropy(g, t) == doctest::Approx(oracle::entropy(g, t)).epsilon(1e-12));
}

TEST_CASE("a community holding every vertex contributes nothing") {
    const StateGraph g = bridge_triangles();
    std::vector<NodeId> parent{kNoNode, 0};
    std::vector<std::size_t> leaf{kNoNode, kNoNode};
    for (std::size_t v = 0; v < 6; ++v) {
        parent.push_back(1);
        leaf.push_back(v);
    }
    const EncodingTree t = EncodingTree::from_parents(g, parent, leaf);
    CHECK(node_gain(g, t, 1) == 0.0);
    CHECK(tree_entropy(g, t) == doctest::Approx(one_dim_entropy(g)).epsilon(1e-12));
}

TEST_CASE("node gain") {
    const StateGraph g = bridge_triangles();
    const EncodingTree t = two_level(g, {0, 0, 0, 1, 1, 1});
    const NodeId first = t.node(EncodingTree::kRoot).children.front();
    CHECK(t.node(first).cut == 1.0);
    CHECK(t.node(first).volume == 7.0);
    CHECK(node_gain(g, t, first) == doctest::Approx(std::log2(14.0 / 7) / 14).epsilon(1e-9));
    CHECK(node_gain(g, t, first) == doctest::Approx(0.07143).epsilon(1e-4));
    CHECK(node_gain(t, first) == node_gain(g, t, first));

    // Two components: each component community has no boundary.
    const StateGraph split = StateGraph::from_edges(4, {{0, 1, 1}, {2, 3, 1}});
    const EncodingTree ts = two_level(split, {0, 0, 1, 1});
    for (NodeId c : ts.node(EncodingTree::kRoot).children) CHECK(node_gain(split, ts, c) == 0.0);
}

TEST_CASE("stretch and compress on a two-child triangle") {
    const StateGraph g = StateGraph::from_edges(2, {{0, 1, 1}});
    const EncodingTree flat = flat_tree(g);
    const EncodingTree s = stretch(g, flat, EncodingTree::kRoot);
    CHECK(s.size() == flat.size() + 1);
    CHECK(s.node(EncodingTree::kRoot).children.size() == 1);
    CHECK_FALSE(check_tree(s, &g).has_value());
    const EncodingTree c = compress(g, s, EncodingTree::kRoot);
    CHECK(c.height() == 2);
    CHECK_FALSE(check_tree(c, &g).has_value());
}

TEST_CASE("stretch and compress separate two bridged cliques") {
    const StateGraph g = cliques_with_bridge(4);
    const EncodingTree flat = flat_tree(g);
    const EncodingTree c = compress(g, stretch(g, flat, EncodingTree::kRoot), EncodingTree::kRoot);
    CHECK_FALSE(check_tree(c, &g).has_value());
    CHECK(groups_of(layer_partition(c, 1).community_of) == groups_of(std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1}));
    CHECK(tree_entropy(g, c) == doctest::Approx(oracle::exhaustive_two_level(oracle::dense(g))).epsilon(1e-12));
}

TEST_CASE("hcse on two 4-cliques reaches the exhaustive optimum") {
    const StateGraph g = cliques_with_bridge(4);
    std::vector<double> trace;
    const EncodingTree t = hcse_optimize(g, 2, &trace);
    CHECK(t.height() == 2);
    CHECK(groups_of(layer_partition(t, 1).community_of) == groups_of(std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1}));
    CHECK(std::abs(tree_entropy(g, t) - oracle::exhaustive_two_level(oracle::dense(g))) <= 1e-9);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] < trace[i - 1]);
}

TEST_CASE("hcse on complete graphs matches the exhaustive optimum") {
    // Grouping never raises structural entropy, so even a complete graph
    // gains from a split; the optimum comes from the brute-force oracle.
    for (std::size_t n = 3; n <= 6; ++n) {
        const StateGraph g = complete(n);
        const double flat = tree_entropy(g, flat_tree(g));
        const double best = oracle::exhaustive_two_level(oracle::dense(g));
        const EncodingTree t = hcse_optimize(g, 2);
        CHECK(best <= flat + 1e-12);
        CHECK(tree_entropy(g, t) <= flat + 1e-12);
        CHECK(std::abs(tree_entropy(g, t) - best) <= 1e-9);
        CHECK_FALSE(check_tree(t, &g).has_value());
    }
}

TEST_CASE("planted blocks are recovered") {
    Rng rng(3);
    std::vector<int> label;
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < 5; ++i) label.push_back(b);
    const StateGraph g = planted_blocks(label, rng);

    const EncodingTree t3 = hcse_optimize(g, 3);
    CHECK_FALSE(check_tree(t3, &g).has_value());
    REQUIRE(t3.height() == 3);
    CHECK(groups_of(layer_partition(t3, 2).community_of) == groups_of(label));

    const EncodingTree t2 = hcse_optimize(g, 2);
    REQUIRE(t2.height() == 2);
    CHECK(groups_of(layer_partition(t2, 1).community_of) == groups_of(label));
}

TEST_CASE("two-level layer partition is the leaf-community assignment") {
    const StateGraph g = bridge_triangles();
    const EncodingTree t = two_level(g, {0, 0, 0, 1, 1, 1});
    const LayerPartition p = layer_partition(t, 1);
    CHECK(p.nodes.size() == 2);
    for (std::size_t v = 0; v < 6; ++v) CHECK(p.community_of[v] == t.node(t.leaf_of(v)).parent);
}

TEST_CASE("short branches map to their deepest ancestor at the height") {
    // root -> {A -> {B -> {0, 1}, 2}, 3}: vertex 3 hangs directly off the root.
    const StateGraph g = StateGraph::from_edges(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}});
    const std::vector<NodeId> parent{kNoNode, 0, 1, 2, 2, 1, 0};
    const std::vector<std::size_t> leaf{kNoNode, kNoNode, kNoNode, 0, 1, 2, 3};
    const EncodingTree t = EncodingTree::from_parents(g, parent, leaf);
    CHECK(t.height() == 3);
    CHECK_FALSE(check_tree(t, &g).has_value());
    const LayerPartition p1 = layer_partition(t, 1);
    const LayerPartition p2 = layer_partition(t, 2);
    CHECK(p1.community_of[0] == p1.community_of[1]);
    CHECK(p1.community_of[2] != p1.community_of[0]);
    CHECK(p2.community_of[0] == p2.community_of[2]);
    CHECK(p2.community_of[3] != p2.community_of[0]);
    CHECK(t.node(p2.community_of[3]).height >= 2);
    CHECK(t.node(p1.community_of[2]).height >= 1);
}

TEST_CASE("every hcse tree is a valid encoding tree") {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const StateGraph g = oracle::random_graph(4 + rng() % 12, 0.3, rng);
        for (std::size_t k = 2; k <= 4; ++k) {
            const EncodingTree t = hcse_optimize(g, k);
            CHECK(t.height() <= k);
            CHECK_FALSE(check_tree(t, &g).has_value());
            CHECK(tree_entropy(g, t) <= tree_entropy(g, flat_tree(g)) + 1e-12);
        }
    }
}

TEST_CASE("reweighted entropy") {
    const StateGraph g = bridge_triangles();
    const EncodingTree t = two_level(g, {0, 0, 0, 1, 1, 1});
    CHECK(reweighted_entropy(g, t) == doctest::Approx(tree_entropy(g, t)).epsilon(1e-12));

    // All mass inside the first triangle.
    const StateGraph inside = StateGraph::from_edges(6, {{0, 1, 0.5}, {0, 2, 0.25}, {1, 2, 0.25}});
    CHECK(reweighted_entropy(inside, t) == doctest::Approx(oracle::entropy(inside, t)).epsilon(1e-12));

    const StateGraph uniform = complete(6);
    CHECK(reweighted_entropy(uniform, t) == doctest::Approx(oracle::entropy(uniform, t)).epsilon(1e-12));
    const BoundReport b = bound_check(uniform, t);
    CHECK(b.holds());
    CHECK(b.value == doctest::Approx(reweighted_entropy(uniform, t)).epsilon(1e-12));

    CHECK_THROWS_AS(reweighted_entropy(complete(5), t), ValidationError);
}

TEST_CASE("bound check on a flat tree is exact") {
    Rng rng(5);
    const StateGraph g = oracle::random_graph(7, 0.5, rng);
    const BoundReport b = bound_check(g, flat_tree(g));
    CHECK(b.eta.empty());
    CHECK(b.lower == b.upper);
    CHECK(b.value == doctest::Approx(b.upper).epsilon(1e-12));
    CHECK(b.upper == doctest::Approx(one_dim_entropy(g)).epsilon(1e-12));
}

TEST_CASE("bounds hold on random instances") {
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        const StateGraph g = oracle::random_graph(4 + rng() % 9, 0.4, rng);
        const EncodingTree t = oracle::random_tree(g, rng);
        const StateGraph gp = oracle::random_graph(g.size(), 0.6, rng);
        CHECK(bound_check(gp, t).holds());
    }
}

TEST_CASE("tree json round trip") {
    Rng rng(7);
    const StateGraph g = oracle::random_graph(10, 0.4, rng);
    const EncodingTree t = hcse_optimize(g, 3);
    const EncodingTree back = tree_from_json(tree_to_json(t));
    CHECK(tree_to_json(back) == tree_to_json(t));
    CHECK(tree_entropy(g, back) == tree_entropy(g, t));
}

TEST_CASE("canonical ids are breadth first") {
    Rng rng(8);
    const StateGraph g = oracle::random_graph(12, 0.4, rng);
    const EncodingTree t = hcse_optimize(g, 3);
    for (std::size_t i = 1; i < t.size(); ++i) CHECK(t.node(i).parent < i);
    for (std::size_t h = 0; h <= t.height(); ++h)
        for (NodeId id : t.nodes_at_height(h)) CHECK(t.node(id).height == h);
}
