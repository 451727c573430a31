#pragma once

#include <string>
#include <vector>

#include "sihd/dataset.hpp"
#include "sihd/encoding_tree.hpp"

namespace sihd {

// Contiguous slice [begin, end) of a trajectory whose states share one
// community at height `layer`. The subgoal is the state at end - 1.
struct Segment {
    std::size_t layer = 0;
    std::size_t index = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    NodeId community = kNoNode;

    std::size_t length() const { return end - begin; }
    std::size_t subgoal_step() const { return end - 1; }
};

// Segments of one trajectory for layers 1..K where K is the tree height;
// layer K is the whole trajectory.
struct SegmentHierarchy {
    std::size_t trajectory_length = 0;
    std::vector<std::vector<Segment>> layers;  // layers[h - 1]

    std::size_t height() const { return layers.size(); }
    const std::vector<Segment>& layer(std::size_t h) const { return layers.at(h - 1); }
    /// Timesteps of the layer-h subgoal sequence.
    std::vector<std::size_t> subgoal_steps(std::size_t h) const;
    /// Indices [first, last) of the layer-(h-1) segments inside layer-h segment i.
    std::pair<std::size_t, std::size_t> children(std::size_t h, std::size_t i) const;
    /// Subgoal timesteps of the layer-(h-1) segments inside layer-h segment i.
    std::vector<std::size_t> child_subgoal_steps(std::size_t h, std::size_t i) const;
};

/// Maps each state to a tree vertex: exact match first, else the first vertex
/// within L-infinity distance `tol`. Throws ValidationError for unmapped states.
std::vector<std::size_t> resolve_vertices(const std::vector<Vec>& states, const std::vector<Vec>& vertices, double tol);

/// Greedy split: a segment ends exactly where the community changes.
std::vector<Segment> segment_layer(const std::vector<std::size_t>& vertex_ids, const LayerPartition& partition);

/// Segments every layer; finer layers inherit all coarser boundaries.
SegmentHierarchy build_hierarchy(const std::vector<std::size_t>& vertex_ids, const EncodingTree& tree);
SegmentHierarchy build_hierarchy(const Trajectory& traj, const EncodingTree& tree);

/// Start indices of the segments of a layer (first entry is always 0).
std::vector<std::size_t> boundaries(const std::vector<Segment>& layer);

struct PaddedSequence {
    std::vector<Vec> values;
    std::vector<bool> mask;  // true for real positions
};

/// Repeats the last element up to `target_len`. Throws ValidationError when the
/// sequence is empty or longer than the target.
PaddedSequence pad_sequence(const std::vector<Vec>& seq, std::size_t target_len);
std::vector<Vec> unpad(const PaddedSequence& padded);
/// Consecutive chunks of at most `target_len` elements.
std::vector<std::vector<Vec>> split_chunks(const std::vector<Vec>& seq, std::size_t target_len);

std::string hierarchies_to_json(const std::vector<SegmentHierarchy>& hierarchies);
std::vector<SegmentHierarchy> hierarchies_from_json(const std::string& text);

}  // namespace sihd
