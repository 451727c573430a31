#pragma once

#include <utility>
#include <vector>

#include "sihd/diffusion.hpp"
#include "sihd/encoding_tree.hpp"
#include "sihd/kernels.hpp"
#include "sihd/state_graph.hpp"

namespace sihd {

// Joint density of consecutive generated states evaluated on the vertex set,
// symmetrized, with the diagonal dropped and total mass normalized to 1.
struct TransitionModel {
    std::size_t samples = 0;  // number of (s_t, s_t+1) pairs
    Vec bandwidth;            // 2d entries: first slice, then second slice
    kernels::SquareMatrix joint;
    Vec visitation;           // row sums of joint
    bool degenerate = false;  // no kernel mass reached any vertex pair; joint is uniform

    std::size_t vertex_count() const { return joint.n; }
    /// Complete weighted graph whose degrees are the visitation probabilities.
    StateGraph graph() const;
};

/// Scott's rule per dimension: sd * n^(-1/(dims+4)), floored at `floor`.
Vec scott_bandwidth(const std::vector<Vec>& samples, double floor);

TransitionModel transitions_from_pairs(const std::vector<Vec>& vertices,
                                       const std::vector<std::pair<Vec, Vec>>& pairs, double bandwidth_floor);

/// Generates `n` unconditional layer-1 rollouts, pools adjacent state pairs and
/// fits the transition model on `vertices`.
TransitionModel estimate_transitions(const Denoiser& layer1, const Normalizer& normalizer, std::size_t state_dim,
                                     const VarianceSchedule& schedule, std::size_t n, Rng& rng,
                                     const std::vector<Vec>& vertices, double bandwidth_floor = 1e-3,
                                     GuidanceMode mode = GuidanceMode::embedding);

/// Raw state rows of one generated layer-1 sequence.
std::vector<Vec> generated_states(const Vec& flat, const Normalizer& normalizer, std::size_t seq_len,
                                  std::size_t state_dim);

/// H(S), H(U_h) and eta_h of the reweighted graph under `tree`.
EntropyTerms entropy_terms(const TransitionModel& model, const EncodingTree& tree);

}  // namespace sihd
