#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "sihd/checkpoint.hpp"
#include "sihd/maze.hpp"
#include "sihd/mlp.hpp"
#include "sihd/pipeline.hpp"
#include "sihd/training.hpp"
#include "sihd/transition.hpp"

using namespace sihd;

namespace {

double relative_error(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

// Single-segment layer dataset holding one fixed sequence.
LayerDataset constant_set(std::size_t seq_len, const Vec& element) {
    LayerDataset set;
    set.layer = 2;
    set.seq_len = seq_len;
    set.elem_dim = element.size();
    set.normalizer = Normalizer::fit({Vec(element.size(), -1.0), Vec(element.size(), 1.0)});
    Vec flat;
    for (std::size_t t = 0; t < seq_len; ++t) flat.insert(flat.end(), element.begin(), element.end());
    set.sequences = {flat};
    set.conditions = {0.5};
    set.vertices = {{0}};
    return set;
}

}  // namespace

TEST_CASE("three-parameter network gradient matches finite differences") {
    const Mlp net({2, 1});
    REQUIRE(net.parameter_count() == 3);
    Vec p{0.3, -0.8, 0.1};
    const Vec x{0.7, -1.3};
    const double target = 0.25;
    auto loss = [&](const Vec& q) {
        const double o = net.forward(q, x)[0] - target;
        return o * o;
    };
    Mlp::Cache cache;
    const double o = net.forward(p, x, cache)[0] - target;
    Vec grad(3, 0.0);
    net.backward(p, cache, {2 * o}, grad);
    for (std::size_t i = 0; i < 3; ++i) {
        Vec hi = p, lo = p;
        hi[i] += 1e-5;
        lo[i] -= 1e-5;
        CHECK(relative_error(grad[i], (loss(hi) - loss(lo)) / 2e-5) < 1e-4);
    }
}

TEST_CASE("denoiser loss gradient matches finite differences") {
    Denoiser d({2, 2, 2, 2, 8});
    REQUIRE(d.parameter_count() <= 1000);
    Rng rng(1);
    d.initialize(rng);
    std::vector<TrainingExample> batch;
    for (int i = 0; i < 3; ++i) {
        TrainingExample ex;
        ex.noised = {standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng)};
        ex.noise = {standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng)};
        ex.k = 1 + i;
        ex.y = 0.4 * i - 0.3;
        ex.null_condition = i == 1;
        ex.weight = 0.5 + i;
        batch.push_back(ex);
    }
    const LossResult r = training_loss(d, batch, 2, 0.0, std::nullopt);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.parameter_count(); ++i) {
        Denoiser hi = d, lo = d;
        hi.params[i] += 1e-5;
        lo.params[i] -= 1e-5;
        const double fd = (training_loss(hi, batch, 2, 0.0, std::nullopt).mse - training_loss(lo, batch, 2, 0.0, std::nullopt).mse) / 2e-5;
        if (std::abs(fd) < 1e-7 && std::abs(r.grad[i]) < 1e-7) continue;
        worst = std::max(worst, relative_error(r.grad[i], fd));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("silu derivative") {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 4.0})
        CHECK(silu_derivative(x) == doctest::Approx((silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6).epsilon(1e-6));
}

TEST_CASE("overfitting one segment drives the loss down") {
    const LayerDataset set = constant_set(4, {0.5, -0.25});
    const auto schedule = make_schedule(ScheduleKind::cosine, 20);
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.hidden = 64;
    cfg.learning_rate = 3e-3;
    cfg.p_uncond = 0.0;
    Vec trace;
    train_layer(set, schedule, cfg, &trace);
    REQUIRE(trace.size() == 200);
    auto window = [&](std::size_t from) { return std::accumulate(trace.begin() + from, trace.begin() + from + 20, 0.0) / 20; };
    CHECK(window(180) < 0.1 * window(0));
}

TEST_CASE("training is deterministic per seed") {
    const LayerDataset set = constant_set(4, {0.5, -0.25});
    const auto schedule = make_schedule(ScheduleKind::cosine, 10);
    TrainConfig cfg;
    cfg.steps = 30;
    cfg.hidden = 16;
    cfg.seed = 9;
    const LayerModel a = train_layer(set, schedule, cfg);
    const LayerModel b = train_layer(set, schedule, cfg);
    CHECK(a.model.params == b.model.params);
    CHECK(a.ema == b.ema);
    cfg.seed = 10;
    CHECK(train_layer(set, schedule, cfg).model.params != a.model.params);
}

TEST_CASE("point-mass pairs put all mass on one vertex pair") {
    const std::vector<Vec> vertices{{0, 0}, {5, 0}, {0, 5}, {5, 5}};
    const std::vector<std::pair<Vec, Vec>> pairs(10, {Vec{0, 0}, Vec{5, 5}});
    const TransitionModel m = transitions_from_pairs(vertices, pairs, 1e-3);
    CHECK_FALSE(m.degenerate);
    CHECK(m.joint(0, 3) == doctest::Approx(0.5));
    CHECK(m.joint(3, 0) == doctest::Approx(0.5));
    CHECK(std::accumulate(m.visitation.begin(), m.visitation.end(), 0.0) == doctest::Approx(1.0));
    CHECK(m.visitation[1] == doctest::Approx(0.0));
}

TEST_CASE("pairs far from every vertex fall back to a uniform joint") {
    const std::vector<Vec> vertices{{0, 0}, {1, 0}, {0, 1}};
    const TransitionModel m = transitions_from_pairs(vertices, {{Vec{500, 500}, Vec{501, 500}}}, 1e-3);
    CHECK(m.degenerate);
    for (double v : m.visitation) CHECK(v == doctest::Approx(1.0 / 3));
}

TEST_CASE("visitation sums to one") {
    Rng rng(2);
    std::vector<Vec> vertices(12);
    for (auto& v : vertices) v = {standard_normal(rng), standard_normal(rng)};
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < 40; ++i) pairs.push_back({{standard_normal(rng), standard_normal(rng)}, {standard_normal(rng), standard_normal(rng)}});
    const TransitionModel m = transitions_from_pairs(vertices, pairs, 1e-3);
    CHECK(std::accumulate(m.visitation.begin(), m.visitation.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(m.joint(i, i) == 0.0);
        for (std::size_t j = 0; j < 12; ++j) CHECK(m.joint(i, j) == m.joint(j, i));
    }
}

TEST_CASE("kernel density peaks at the cloud mean") {
    Rng rng(3);
    const double sigma = 0.5;
    std::vector<Vec> cloud(400);
    for (auto& p : cloud) p = {1.0 + sigma * standard_normal(rng), -2.0 + sigma * standard_normal(rng)};
    const Vec bw = scott_bandwidth(cloud, 1e-3);
    // Direct kernel sum.
    auto direct = [&](const Vec& q) {
        double s = 0.0;
        for (const auto& p : cloud) {
            double k = 1.0;
            for (std::size_t d = 0; d < 2; ++d) {
                const double z = (q[d] - p[d]) / bw[d];
                k *= std::exp(-0.5 * z * z) / (bw[d] * std::sqrt(2 * M_PI));
            }
            s += k;
        }
        return s / cloud.size();
    };
    const std::vector<Vec> queries{{1.0, -2.0}, {1.0 + 3 * sigma, -2.0}};
    const Vec dens = kernels::density(queries, cloud, bw);
    CHECK(dens[0] == doctest::Approx(direct(queries[0])).epsilon(1e-9));
    CHECK(dens[1] == doctest::Approx(direct(queries[1])).epsilon(1e-9));
    CHECK(dens[0] > dens[1]);
}

TEST_CASE("entropy terms") {
    // Uniform visitation over 16 vertices of a ring.
    std::vector<WeightedEdge> ring;
    for (std::size_t i = 0; i < 16; ++i) ring.push_back({i, (i + 1) % 16, 1.0});
    const StateGraph g = StateGraph::from_edges(16, ring);
    const EncodingTree tree = hcse_optimize(g, 2);
    TransitionModel m;
    m.samples = 16;
    m.joint.n = 16;
    m.joint.values.assign(256, 0.0);
    for (const auto& e : ring) m.joint(e.u, e.v) = m.joint(e.v, e.u) = 1.0 / 32;
    m.visitation.assign(16, 1.0 / 16);
    const EntropyTerms t = entropy_terms(m, tree);
    CHECK(t.h_s == doctest::Approx(4.0).epsilon(1e-12));

    // A single community at height 1 carries zero entropy.
    std::vector<NodeId> parent{kNoNode, 0};
    std::vector<std::size_t> leaf{kNoNode, kNoNode};
    for (std::size_t v = 0; v < 16; ++v) {
        parent.push_back(1);
        leaf.push_back(v);
    }
    const EncodingTree one = EncodingTree::from_parents(g, parent, leaf);
    const EntropyTerms t1 = entropy_terms(m, one);
    REQUIRE(t1.layer_entropy.size() == 1);
    CHECK(t1.layer_entropy[0] == doctest::Approx(0.0));

    const BoundReport b = bound_check(m.graph(), tree);
    CHECK(b.holds());
    CHECK(t.lower_bound() == doctest::Approx(b.lower).epsilon(1e-12));
}

TEST_CASE("regularizer weights") {
    const Vec w = regularizer_weights({1.0, 2.0, 3.0}, 0.5);
    CHECK(w[0] < w[1]);
    CHECK(w[1] == doctest::Approx(1.0));
    CHECK(w[2] > w[1]);
    const Vec off = regularizer_weights({1.0, 2.0, 3.0}, 0.0);
    for (double v : off) CHECK(v == 1.0);
    for (double v : regularizer_weights({0.0, 0.0, 100.0}, 10.0)) CHECK(v >= 0.0);
}

TEST_CASE("stack training on a small maze") {
    Config cfg;
    cfg.maze = "open";
    cfg.grid_width = 4;
    cfg.grid_height = 4;
    cfg.episodes = 20;
    cfg.tree_height = 3;
    cfg.train_steps = 60;
    cfg.hidden_width = 16;
    cfg.kde_refresh = 20;
    cfg.kde_samples = 4;
    cfg.k_max = 6;
    cfg.pad_len = 8;
    const MazeEnv env = make_env(cfg);
    const Dataset data = synthesize_dataset(env, cfg.episodes, cfg.collector_noise, cfg.seed);
    const KSelection sel = build_graph(data, cfg);
    const EncodingTree tree = build_tree(sel.graph, cfg);
    REQUIRE(tree.height() >= 2);
    const auto hier = segment_dataset(data, tree);
    const auto sets = build_training_sets(data, tree, hier, cfg.pad_len);
    REQUIRE(sets.size() == tree.height());
    CHECK(sets[0].elem_dim == 4);
    for (std::size_t h = 2; h <= tree.height(); ++h) CHECK(sets[h - 1].elem_dim == 2);
    for (const auto& s : sets)
        for (const auto& seq : s.sequences)
            for (double v : seq) CHECK(std::abs(v) <= 1.0 + 1e-12);

    TrainLog log;
    const DiffusionStack stack = train_model(data, tree, hier, cfg, &log);
    CHECK(stack.height() == tree.height());
    CHECK(log.loss.size() == tree.height());
    CHECK(log.regularizer.size() == 3);
    for (std::size_t i = 0; i < log.regularizer.size(); ++i) {
        CHECK(log.regularizer[i].step == 20 * i);
        CHECK(log.regularizer[i].bound_holds);
    }

    TrainLog again;
    const DiffusionStack stack2 = train_model(data, tree, hier, cfg, &again);
    CHECK(checkpoint_bytes(stack) == checkpoint_bytes(stack2));

    const std::string bytes = checkpoint_bytes(stack);
    const DiffusionStack back = parse_checkpoint(bytes);
    CHECK(checkpoint_bytes(back) == bytes);
    CHECK(back.layer(1).ema == stack.layer(1).ema);
    std::string corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x5a;
    CHECK_THROWS_AS(parse_checkpoint(corrupt), ValidationError);
    CHECK_THROWS_AS(parse_checkpoint(bytes.substr(0, 20)), ValidationError);
}
