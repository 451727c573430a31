#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sihd/common.hpp"
#include "sihd/dataset.hpp"
#include "sihd/kernels.hpp"

namespace sihd {

using kernels::Similarity;

struct WeightedEdge {
    std::size_t u = 0;
    std::size_t v = 0;
    double w = 0.0;
};

struct Neighbor {
    std::size_t vertex = 0;
    double weight = 0.0;
};

// Weighted undirected graph over observed states. Immutable once built.
class StateGraph {
public:
    StateGraph() = default;
    /// Duplicate (u,v) pairs are summed; self-loops and negative weights are rejected.
    StateGraph(std::vector<Vec> vertices, const std::vector<WeightedEdge>& edges);
    /// Vertices without coordinates (tests, reweighted graphs over index sets).
    static StateGraph from_edges(std::size_t n_vertices, const std::vector<WeightedEdge>& edges);

    std::size_t size() const { return adjacency_.size(); }
    const std::vector<Vec>& vertices() const { return vertices_; }
    const std::vector<Neighbor>& neighbors(std::size_t v) const { return adjacency_[v]; }
    double degree(std::size_t v) const { return degree_[v]; }
    const Vec& degrees() const { return degree_; }
    double volume() const { return volume_; }
    double weight(std::size_t u, std::size_t v) const;
    std::size_t edge_count() const;
    /// Each undirected edge once, u < v, lexicographic order.
    std::vector<WeightedEdge> edges() const;

    // Construction metadata carried into artifacts.
    std::size_t k = 0;
    Similarity similarity = Similarity::rbf;
    double dedupe_tol = 1e-9;

private:
    std::vector<Vec> vertices_;
    std::vector<std::vector<Neighbor>> adjacency_;
    Vec degree_;
    double volume_ = 0.0;
};

struct DedupeResult {
    std::vector<Vec> vertices;
    // vertex_of[trajectory][timestep] -> vertex index
    std::vector<std::vector<std::size_t>> vertex_of;
};

/// Merges states within L-infinity distance `tol` of an earlier representative.
DedupeResult dedupe_states(const Dataset& dataset, double tol);

enum class Symmetrize { union_of, intersection_of };

/// Exact k-NN graph; ties broken by lower vertex index; edge weight = similarity.
/// sigma <= 0 selects the median pairwise distance for rbf.
StateGraph build_knn_graph(const std::vector<Vec>& states, std::size_t k, Similarity similarity,
                           Symmetrize symmetrize = Symmetrize::union_of, double sigma = 0.0);

/// Median of pairwise Euclidean distances (1.0 if all are zero).
double median_pairwise_distance(const std::vector<Vec>& states);

/// Shannon entropy (bits) of the degree distribution d_v / vol.
double one_dim_entropy(const StateGraph& graph);

struct KSelection {
    std::size_t k = 0;
    StateGraph graph;
    std::vector<std::pair<std::size_t, double>> entropy_by_k;
};

/// Smallest k in [k_min, k_max] maximizing one_dim_entropy.
KSelection select_k(const std::vector<Vec>& states, std::size_t k_min, std::size_t k_max, Similarity similarity,
                    Symmetrize symmetrize = Symmetrize::union_of);

std::string similarity_name(Similarity s);
Similarity parse_similarity(const std::string& name);

std::string graph_to_json(const StateGraph& graph);
StateGraph graph_from_json(const std::string& text);

}  // namespace sihd
