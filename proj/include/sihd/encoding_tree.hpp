#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sihd/state_graph.hpp"

namespace sihd {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct TreeNode {
    NodeId parent = kNoNode;
    std::vector<NodeId> children;
    // Distance below the root subtracted from the tree height: the root sits at
    // height(tree), leaves on full-length branches at 0.
    std::size_t height = 0;
    // Sorted vertex set V_alpha.
    std::vector<std::size_t> vertices;
    double volume = 0.0;
    double cut = 0.0;

    bool is_leaf() const { return children.empty(); }
};

// Community hierarchy over the vertices of a StateGraph. Node ids are
// canonical: breadth-first from the root (id 0), siblings ordered by their
// smallest vertex. Cached volume/cut values refer to the graph the tree was
// built against.
class EncodingTree {
public:
    static constexpr NodeId kRoot = 0;

    EncodingTree() = default;

    /// Builds a tree from a parent array (root has kNoNode) and the vertex of
    /// each leaf (kNoNode for internal nodes); statistics come from `graph`.
    static EncodingTree from_parents(const StateGraph& graph, const std::vector<NodeId>& parent,
                                     const std::vector<std::size_t>& leaf_vertex);

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }
    std::size_t height() const { return nodes_.empty() ? 0 : nodes_[kRoot].height; }
    std::size_t vertex_count() const { return leaf_of_.size(); }
    NodeId leaf_of(std::size_t vertex) const { return leaf_of_.at(vertex); }
    /// All nodes whose height equals h (ascending id).
    std::vector<NodeId> nodes_at_height(std::size_t h) const;
    double root_volume() const { return nodes_.empty() ? 0.0 : nodes_[kRoot].volume; }

    // Artifact metadata (vertex coordinates and the dedupe tolerance used to
    // build them), carried so later stages can map raw states to vertices.
    std::vector<Vec> vertex_states;
    double dedupe_tol = 1e-9;

private:
    friend class TreeAccess;
    std::vector<TreeNode> nodes_;
    std::vector<NodeId> leaf_of_;
};

struct LayerPartition {
    std::size_t h = 0;
    std::vector<NodeId> nodes;          // distinct communities, ascending id
    std::vector<NodeId> community_of;   // vertex -> community node
};

/// Root with one leaf per vertex.
EncodingTree flat_tree(const StateGraph& graph);

/// Structural entropy of `graph` under `tree`, in bits.
double tree_entropy(const StateGraph& graph, const EncodingTree& tree);

/// Structural information gain of a non-root node; recomputed from `graph`.
double node_gain(const StateGraph& graph, const EncodingTree& tree, NodeId alpha);
/// Same, from the statistics cached in the tree.
double node_gain(const EncodingTree& tree, NodeId alpha);

/// Binarizes the alpha-triangle rooted at alpha (all children leaves) by
/// repeatedly merging the two children whose merge lowers tree entropy the
/// most (ties broken by the smaller node ids).
EncodingTree stretch(const StateGraph& graph, const EncodingTree& tree, NodeId alpha);
/// Flattens a stretched binary subtree under alpha to exactly three node layers,
/// choosing the lowest-entropy cut of the hierarchy.
EncodingTree compress(const StateGraph& graph, const EncodingTree& tree, NodeId alpha);

/// Greedy structural-entropy minimization up to height `max_height`. When
/// `trace` is given it receives the entropy after initialization and after
/// every accepted iteration.
EncodingTree hcse_optimize(const StateGraph& graph, std::size_t max_height, std::vector<double>* trace = nullptr);

/// Vertex -> community lookup at height h (1 <= h < height). A vertex on a
/// short branch maps to its deepest ancestor with height >= h.
LayerPartition layer_partition(const EncodingTree& tree, std::size_t h);

/// Structural entropy of a reweighted graph over the same vertex set, under a
/// tree built on the original graph.
double reweighted_entropy(const StateGraph& reweighted, const EncodingTree& tree);

struct BoundReport {
    double lower = 0.0;
    double value = 0.0;
    double upper = 0.0;  // = H(S)
    Vec eta;             // eta[h-1] for h = 1..height-1
    Vec layer_entropy;   // H(U_h), same indexing

    bool holds(double tol = 1e-9) const { return lower <= value + tol && value <= upper + tol; }
};

/// Variational sandwich H(S) - sum_h eta_h H(U_h) <= H^T(G') <= H(S).
BoundReport bound_check(const StateGraph& reweighted, const EncodingTree& tree);

/// Per-node (volume, cut) for `graph` under `tree`'s structure.
struct NodeStats {
    Vec volume;
    Vec cut;
};
NodeStats node_stats(const StateGraph& graph, const EncodingTree& tree);

/// Nullopt if all four encoding-tree properties hold and the cached statistics
/// match `graph` (when given); otherwise a description of the first violation.
std::optional<std::string> check_tree(const EncodingTree& tree, const StateGraph* graph = nullptr);

std::string tree_to_json(const EncodingTree& tree);
EncodingTree tree_from_json(const std::string& text);

}  // namespace sihd
