#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "sihd/kernels.hpp"
#include "sihd/maze.hpp"
#include "sihd/state_graph.hpp"

using namespace sihd;

namespace {

Dataset one_trajectory(std::vector<Vec> states) {
    Trajectory t;
    t.actions.assign(states.size(), Vec{0.0, 0.0});
    t.rewards.assign(states.size(), 0.0);
    t.states = std::move(states);
    return make_dataset({t});
}

std::vector<Vec> random_points(std::size_t n, Rng& rng) {
    std::vector<Vec> pts(n);
    for (auto& p : pts) p = {uniform01(rng), uniform01(rng)};
    return pts;
}

double degree_entropy(const StateGraph& g) {
    double vol = 0.0;
    Vec deg(g.size(), 0.0);
    for (const auto& e : g.edges()) {
        deg[e.u] += e.w;
        deg[e.v] += e.w;
        vol += 2.0 * e.w;
    }
    double h = 0.0;
    for (double d : deg)
        if (d > 0.0) h -= d / vol * std::log2(d / vol);
    return h;
}

}  // namespace

TEST_CASE("dedupe merges exact duplicates") {
    const auto r = dedupe_states(one_trajectory({{1, 2}, {1, 2}}), 0.0);
    CHECK(r.vertices.size() == 1);
    CHECK(r.vertex_of[0] == std::vector<std::size_t>{0, 0});
}

TEST_CASE("dedupe keeps states beyond tolerance") {
    CHECK(dedupe_states(one_trajectory({{0, 0}, {0, 0.5}}), 0.1).vertices.size() == 2);
}

TEST_CASE("dedupe on a jittered maze dataset counts distinct states") {
    MazeEnv env = MazeEnv::open(8, 8);
    env.jitter = 0.05;
    const Dataset ds = synthesize_dataset(env, 200, 0.3, 4);
    std::set<Vec> distinct;
    for (const auto& t : ds.trajectories) distinct.insert(t.states.begin(), t.states.end());
    CHECK(dedupe_states(ds, 1e-9).vertices.size() == distinct.size());
}

TEST_CASE("collinear points with k = 1 form a path") {
    const StateGraph g = build_knn_graph({{0, 0}, {1, 0}, {2, 0}}, 1, Similarity::rbf);
    const auto e = g.edges();
    REQUIRE(e.size() == 2);
    CHECK(e[0].u == 0);
    CHECK(e[0].v == 1);
    CHECK(e[1].u == 1);
    CHECK(e[1].v == 2);
}

TEST_CASE("k = n - 1 gives the complete graph") {
    Rng rng(1);
    const auto pts = random_points(9, rng);
    CHECK(build_knn_graph(pts, 8, Similarity::rbf).edge_count() == 36);
    CHECK(build_knn_graph(pts, 8, Similarity::cosine).edge_count() == 36);
}

TEST_CASE("k-NN graph matches an exhaustive similarity ranking") {
    Rng rng(2);
    const auto pts = random_points(20, rng);
    const double sigma = 0.7;
    const StateGraph g = build_knn_graph(pts, 3, Similarity::rbf, Symmetrize::union_of, sigma);

    std::map<std::pair<std::size_t, std::size_t>, double> expected;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j == i) continue;
            const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1];
            ranked.push_back({-std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)), j});
        }
        std::sort(ranked.begin(), ranked.end());
        for (std::size_t r = 0; r < 3; ++r) {
            const std::size_t j = ranked[r].second;
            expected[{std::min(i, j), std::max(i, j)}] = -ranked[r].first;
        }
    }
    const auto edges = g.edges();
    REQUIRE(edges.size() == expected.size());
    for (const auto& e : edges) {
        REQUIRE(expected.count({e.u, e.v}));
        CHECK(e.w == doctest::Approx(expected[{e.u, e.v}]).epsilon(1e-12));
    }
    for (std::size_t v = 0; v < g.size(); ++v) {
        CHECK(g.neighbors(v).size() >= 3);
        CHECK(g.neighbors(v).size() <= 19);
    }
}

TEST_CASE("intersection symmetrization keeps mutual neighbours only") {
    Rng rng(3);
    const auto pts = random_points(15, rng);
    const StateGraph u = build_knn_graph(pts, 3, Similarity::rbf, Symmetrize::union_of);
    const StateGraph x = build_knn_graph(pts, 3, Similarity::rbf, Symmetrize::intersection_of);
    CHECK(x.edge_count() <= u.edge_count());
    for (const auto& e : x.edges()) CHECK(u.weight(e.u, e.v) == e.w);
}

TEST_CASE("one-dimensional entropy") {
    const StateGraph cycle = StateGraph::from_edges(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {0, 3, 1}});
    CHECK(one_dim_entropy(cycle) == doctest::Approx(4 * (2.0 / 8) * std::log2(8.0 / 2)).epsilon(1e-12));
    CHECK(one_dim_entropy(StateGraph::from_edges(2, {{0, 1, 1}})) == doctest::Approx(1.0));
    const StateGraph star = StateGraph::from_edges(4, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}});
    CHECK(one_dim_entropy(star) == doctest::Approx(0.5 + 3 * std::log2(6.0) / 6).epsilon(1e-5));
}

TEST_CASE("select_k on a singleton range") {
    Rng rng(4);
    CHECK(select_k(random_points(10, rng), 3, 3, Similarity::rbf).k == 3);
}

TEST_CASE("select_k prefers the smallest k among ties") {
    std::vector<Vec> pentagon;
    for (int i = 0; i < 5; ++i) pentagon.push_back({std::cos(2 * M_PI * i / 5), std::sin(2 * M_PI * i / 5)});
    const auto sel = select_k(pentagon, 2, 4, Similarity::rbf);
    CHECK(sel.entropy_by_k.front().second == doctest::Approx(std::log2(5.0)));
    CHECK(sel.entropy_by_k.back().second == doctest::Approx(std::log2(5.0)));
    CHECK(sel.k == 2);
}

TEST_CASE("select_k matches a per-k entropy loop") {
    Rng rng(5);
    std::vector<Vec> pts;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 10; ++i) pts.push_back({3.0 * c + 0.3 * standard_normal(rng), 0.3 * standard_normal(rng)});
    std::size_t best_k = 0;
    double best = -1.0;
    for (std::size_t k = 2; k <= 8; ++k) {
        const double h = degree_entropy(build_knn_graph(pts, k, Similarity::rbf));
        if (h > best + 1e-12) {
            best = h;
            best_k = k;
        }
    }
    const auto sel = select_k(pts, 2, 8, Similarity::rbf);
    CHECK(sel.k == best_k);
    CHECK(one_dim_entropy(sel.graph) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("invalid construction is rejected") {
    CHECK_THROWS_AS(StateGraph::from_edges(2, {{0, 0, 1}}), ValidationError);
    CHECK_THROWS_AS(StateGraph::from_edges(2, {{0, 1, -1}}), ValidationError);
    Rng rng(6);
    CHECK_THROWS_AS(select_k(random_points(5, rng), 2, 5, Similarity::rbf), ValidationError);
}

TEST_CASE("graph json round trip") {
    Rng rng(7);
    const StateGraph g = build_knn_graph(random_points(12, rng), 3, Similarity::cosine);
    CHECK(graph_to_json(graph_from_json(graph_to_json(g))) == graph_to_json(g));
}

TEST_CASE("parallel kernels equal the serial references") {
    Rng rng(8);
    std::vector<Vec> pts(60), a(200), b(200);
    for (auto& p : pts) p = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
        b[i] = {standard_normal(rng), standard_normal(rng), standard_normal(rng)};
    }
    const Vec bw{0.4, 0.5, 0.6};
    CHECK(kernels::omp::squared_distances(pts).values == kernels::serial::squared_distances(pts).values);
    CHECK(kernels::omp::similarity(pts, Similarity::rbf, 0.8).values ==
          kernels::serial::similarity(pts, Similarity::rbf, 0.8).values);
    CHECK(kernels::omp::similarity(pts, Similarity::cosine, 0).values ==
          kernels::serial::similarity(pts, Similarity::cosine, 0).values);
    CHECK(kernels::omp::pair_density(pts, a, b, bw, bw).values ==
          kernels::serial::pair_density(pts, a, b, bw, bw).values);
    CHECK(kernels::omp::density(pts, a, bw) == kernels::serial::density(pts, a, bw));
}
