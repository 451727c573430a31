#include "sihd/state_graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "json.hpp"

namespace sihd {

StateGraph::StateGraph(std::vector<Vec> vertices, const std::vector<WeightedEdge>& edges)
    : vertices_(std::move(vertices)) {
    const std::size_t n = vertices_.size();
    std::map<std::pair<std::size_t, std::size_t>, double> merged;
    for (const auto& e : edges) {
        if (e.u >= n || e.v >= n) throw ValidationError("edge endpoint out of range");
        if (e.u == e.v) throw ValidationError("self-loops are not allowed");
        if (!(e.w >= 0.0) || !std::isfinite(e.w)) throw ValidationError("edge weights must be finite and non-negative");
        merged[{std::min(e.u, e.v), std::max(e.u, e.v)}] += e.w;
    }
    adjacency_.assign(n, {});
    degree_.assign(n, 0.0);
    for (const auto& [key, w] : merged) {
        adjacency_[key.first].push_back({key.second, w});
        adjacency_[key.second].push_back({key.first, w});
    }
    for (std::size_t v = 0; v < n; ++v) {
        auto& adj = adjacency_[v];
        std::sort(adj.begin(), adj.end(), [](const Neighbor& a, const Neighbor& b) { return a.vertex < b.vertex; });
        for (const auto& nb : adj) degree_[v] += nb.weight;
    }
    volume_ = std::accumulate(degree_.begin(), degree_.end(), 0.0);
}

StateGraph StateGraph::from_edges(std::size_t n_vertices, const std::vector<WeightedEdge>& edges) {
    return StateGraph(std::vector<Vec>(n_vertices), edges);
}

double StateGraph::weight(std::size_t u, std::size_t v) const {
    const auto& adj = adjacency_[u];
    auto it = std::lower_bound(adj.begin(), adj.end(), v,
                               [](const Neighbor& a, std::size_t x) { return a.vertex < x; });
    return it != adj.end() && it->vertex == v ? it->weight : 0.0;
}

std::size_t StateGraph::edge_count() const {
    std::size_t twice = 0;
    for (const auto& adj : adjacency_) twice += adj.size();
    return twice / 2;
}

std::vector<WeightedEdge> StateGraph::edges() const {
    std::vector<WeightedEdge> out;
    for (std::size_t u = 0; u < adjacency_.size(); ++u) {
        for (const auto& nb : adjacency_[u]) {
            if (nb.vertex > u) out.push_back({u, nb.vertex, nb.weight});
        }
    }
    return out;
}

DedupeResult dedupe_states(const Dataset& dataset, double tol) {
    if (tol < 0.0) throw ValidationError("dedupe tolerance must be non-negative");
    DedupeResult out;
    // Exact hits go through the map; the linear scan only runs for tol > 0 misses.
    std::map<Vec, std::size_t> exact;
    for (const auto& tr : dataset.trajectories) {
        std::vector<std::size_t> ids;
        ids.reserve(tr.states.size());
        for (const auto& s : tr.states) {
            std::size_t id = out.vertices.size();
            if (auto it = exact.find(s); it != exact.end()) {
                id = it->second;
            } else if (tol > 0.0) {
                for (std::size_t v = 0; v < out.vertices.size(); ++v) {
                    if (linf_distance(out.vertices[v], s) <= tol) {
                        id = v;
                        break;
                    }
                }
            }
            if (id == out.vertices.size()) {
                out.vertices.push_back(s);
                exact.emplace(s, id);
            }
            ids.push_back(id);
        }
        out.vertex_of.push_back(std::move(ids));
    }
    return out;
}

double median_pairwise_distance(const std::vector<Vec>& states) {
    const auto d2 = kernels::squared_distances(states);
    Vec dists;
    dists.reserve(states.size() * (states.size() - 1) / 2);
    for (std::size_t i = 0; i < states.size(); ++i)
        for (std::size_t j = i + 1; j < states.size(); ++j) dists.push_back(std::sqrt(d2(i, j)));
    if (dists.empty()) return 1.0;
    const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double median = *mid;
    if (dists.size() % 2 == 0) {
        const double lower = *std::max_element(dists.begin(), mid);
        median = 0.5 * (median + lower);
    }
    return median > 0.0 ? median : 1.0;
}

namespace {

void check_states(const std::vector<Vec>& states, std::size_t k, Similarity similarity) {
    if (states.size() < 2) throw ValidationError("k-NN graph needs at least two states");
    if (k == 0 || k >= states.size()) throw ValidationError("k must lie in [1, |S|-1]");
    for (const auto& s : states) {
        for (double x : s)
            if (!std::isfinite(x)) throw ValidationError("non-finite state");
        if (similarity == Similarity::cosine) {
            double n2 = 0.0;
            for (double x : s) n2 += x * x;
            if (n2 == 0.0) throw ValidationError("degenerate similarity: zero-norm state under cosine similarity");
        }
    }
}

StateGraph knn_from_similarity(const std::vector<Vec>& states, const kernels::SquareMatrix& sim, std::size_t k,
                               Symmetrize symmetrize, Similarity similarity) {
    const std::size_t n = states.size();
    std::vector<std::vector<char>> chosen(n, std::vector<char>(n, 0));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if (sim(i, a) != sim(i, b)) return sim(i, a) > sim(i, b);
                              return a < b;
                          });
        for (std::size_t r = 0; r < k; ++r) chosen[i][order[r]] = 1;
        order.resize(n);
    }
    std::vector<WeightedEdge> edges;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool keep = symmetrize == Symmetrize::union_of ? (chosen[i][j] || chosen[j][i])
                                                                 : (chosen[i][j] && chosen[j][i]);
            // Negative cosine similarities are clamped: edge weights are non-negative.
            if (keep) edges.push_back({i, j, std::max(0.0, sim(i, j))});
        }
    }
    StateGraph g(states, edges);
    g.k = k;
    g.similarity = similarity;
    return g;
}

kernels::SquareMatrix similarity_matrix(const std::vector<Vec>& states, Similarity similarity, double sigma) {
    if (similarity == Similarity::rbf && sigma <= 0.0) sigma = median_pairwise_distance(states);
    return kernels::similarity(states, similarity, sigma);
}

}  // namespace

StateGraph build_knn_graph(const std::vector<Vec>& states, std::size_t k, Similarity similarity,
                           Symmetrize symmetrize, double sigma) {
    check_states(states, k, similarity);
    return knn_from_similarity(states, similarity_matrix(states, similarity, sigma), k, symmetrize, similarity);
}

double one_dim_entropy(const StateGraph& graph) {
    if (graph.size() == 0) throw ValidationError("empty graph");
    const double vol = graph.volume();
    if (!(vol > 0.0)) throw ValidationError("graph volume must be positive");
    double h = 0.0;
    for (double d : graph.degrees()) {
        if (d > 0.0) {
            const double p = d / vol;
            h -= p * std::log2(p);
        }
    }
    return h;
}

KSelection select_k(const std::vector<Vec>& states, std::size_t k_min, std::size_t k_max, Similarity similarity,
                    Symmetrize symmetrize) {
    if (k_min == 0 || k_min > k_max || k_max >= states.size()) {
        throw ValidationError("k range must satisfy 1 <= k_min <= k_max <= |S|-1");
    }
    check_states(states, k_min, similarity);
    const auto sim = similarity_matrix(states, similarity, 0.0);
    KSelection best;
    double best_h = -1.0;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        StateGraph g = knn_from_similarity(states, sim, k, symmetrize, similarity);
        const double h = g.volume() > 0.0 ? one_dim_entropy(g) : 0.0;
        best.entropy_by_k.emplace_back(k, h);
        if (h > best_h + 1e-12 * std::max(1.0, std::abs(best_h))) {
            best_h = h;
            best.k = k;
            best.graph = std::move(g);
        }
    }
    return best;
}

std::string similarity_name(Similarity s) { return s == Similarity::cosine ? "cosine" : "rbf"; }

Similarity parse_similarity(const std::string& name) {
    if (name == "cosine") return Similarity::cosine;
    if (name == "rbf" || name == "gaussian-rbf") return Similarity::rbf;
    throw ValidationError("unknown similarity '" + name + "' (expected cosine or rbf)");
}

std::string graph_to_json(const StateGraph& graph) {
    nlohmann::ordered_json j;
    j["k"] = graph.k;
    j["similarity"] = similarity_name(graph.similarity);
    j["dedupe_tol"] = graph.dedupe_tol;
    j["vertices"] = graph.vertices();
    auto edges = nlohmann::ordered_json::array();
    for (const auto& e : graph.edges()) edges.push_back({e.u, e.v, e.w});
    j["edges"] = std::move(edges);
    return j.dump() + "\n";
}

StateGraph graph_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        auto vertices = j.at("vertices").get<std::vector<Vec>>();
        std::vector<WeightedEdge> edges;
        for (const auto& e : j.at("edges")) {
            edges.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()});
        }
        StateGraph g(std::move(vertices), edges);
        g.k = j.value("k", std::size_t{0});
        g.similarity = parse_similarity(j.value("similarity", std::string("rbf")));
        g.dedupe_tol = j.value("dedupe_tol", 1e-9);
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid graph file: ") + e.what());
    }
}

}  // namespace sihd
