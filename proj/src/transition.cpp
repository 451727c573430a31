#include "sihd/transition.hpp"

#include <cmath>

namespace sihd {

StateGraph TransitionModel::graph() const {
    std::vector<WeightedEdge> edges;
    for (std::size_t i = 0; i < joint.n; ++i)
        for (std::size_t j = i + 1; j < joint.n; ++j)
            if (joint(i, j) > 0.0) edges.push_back({i, j, joint(i, j)});
    return StateGraph::from_edges(joint.n, edges);
}

Vec scott_bandwidth(const std::vector<Vec>& samples, double floor) {
    if (samples.empty()) throw ValidationError("bandwidth needs at least one sample");
    const std::size_t dims = samples.front().size();
    const double n = static_cast<double>(samples.size());
    const double factor = std::pow(n, -1.0 / (static_cast<double>(dims) + 4.0));
    Vec bw(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[d];
        mean /= n;
        double var = 0.0;
        for (const auto& s : samples) var += (s[d] - mean) * (s[d] - mean);
        var = samples.size() > 1 ? var / (n - 1.0) : 0.0;
        bw[d] = std::max(std::sqrt(var) * factor, floor);
    }
    return bw;
}

TransitionModel transitions_from_pairs(const std::vector<Vec>& vertices,
                                       const std::vector<std::pair<Vec, Vec>>& pairs, double bandwidth_floor) {
    if (pairs.empty()) throw ValidationError("transition model needs at least one state pair");
    if (vertices.empty()) throw ValidationError("transition model needs a non-empty vertex set");
    const std::size_t d = vertices.front().size();
    std::vector<Vec> first, second, joint_samples;
    for (const auto& [a, b] : pairs) {
        if (a.size() != d || b.size() != d) throw ValidationError("transition pair dimension mismatch");
        first.push_back(a);
        second.push_back(b);
        Vec row = a;
        row.insert(row.end(), b.begin(), b.end());
        joint_samples.push_back(std::move(row));
    }
    TransitionModel m;
    m.samples = pairs.size();
    m.bandwidth = scott_bandwidth(joint_samples, bandwidth_floor);
    const Vec bw_first(m.bandwidth.begin(), m.bandwidth.begin() + static_cast<std::ptrdiff_t>(d));
    const Vec bw_second(m.bandwidth.begin() + static_cast<std::ptrdiff_t>(d), m.bandwidth.end());
    m.joint = kernels::pair_density(vertices, first, second, bw_first, bw_second);
    const std::size_t n = vertices.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m.joint(i, i) = 0.0;
        // Undirected graph: average the two travel directions.
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (m.joint(i, j) + m.joint(j, i));
            m.joint(i, j) = v;
            m.joint(j, i) = v;
            total += 2.0 * v;
        }
    }
    if (!(total > 0.0)) {
        m.degenerate = true;
        total = static_cast<double>(n * (n - 1));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m.joint(i, j) = i == j || n < 2 ? 0.0 : 1.0;
        if (n < 2) total = 1.0;
    }
    for (double& v : m.joint.values) v /= total;
    m.visitation.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m.visitation[i] += m.joint(i, j);
    return m;
}

std::vector<Vec> generated_states(const Vec& flat, const Normalizer& normalizer, std::size_t seq_len,
                                  std::size_t state_dim) {
    const std::size_t elem = normalizer.dim();
    if (flat.size() != seq_len * elem || state_dim > elem) throw ValidationError("generated sequence shape mismatch");
    std::vector<Vec> out;
    for (std::size_t t = 0; t < seq_len; ++t) {
        const Vec row(flat.begin() + static_cast<std::ptrdiff_t>(t * elem),
                      flat.begin() + static_cast<std::ptrdiff_t>((t + 1) * elem));
        Vec raw = normalizer.denormalize(row);
        raw.resize(state_dim);
        out.push_back(std::move(raw));
    }
    return out;
}

TransitionModel estimate_transitions(const Denoiser& layer1, const Normalizer& normalizer, std::size_t state_dim,
                                     const VarianceSchedule& schedule, std::size_t n, Rng& rng,
                                     const std::vector<Vec>& vertices, double bandwidth_floor, GuidanceMode mode) {
    if (n < 2) throw ValidationError("transition estimate needs at least 2 rollouts");
    if (layer1.params.size() != layer1.parameter_count()) throw ValidationError("layer-1 model is not trained");
    std::vector<std::pair<Vec, Vec>> pairs;
    const std::size_t len = layer1.shape().seq_len;
    for (std::size_t r = 0; r < n; ++r) {
        const Vec flat = sample_sequence(layer1, 0.0, 1.0, schedule, rng, {}, mode);
        const auto states = generated_states(flat, normalizer, len, state_dim);
        for (std::size_t t = 0; t + 1 < states.size(); ++t) {
            bool finite = true;
            for (double v : states[t]) finite = finite && std::isfinite(v);
            for (double v : states[t + 1]) finite = finite && std::isfinite(v);
            if (finite) pairs.emplace_back(states[t], states[t + 1]);
        }
    }
    return transitions_from_pairs(vertices, pairs, bandwidth_floor);
}

EntropyTerms entropy_terms(const TransitionModel& model, const EncodingTree& tree) {
    if (model.vertex_count() != tree.vertex_count()) {
        throw ValidationError("transition model and tree cover different vertex sets");
    }
    const auto report = bound_check(model.graph(), tree);
    return {report.upper, report.layer_entropy, report.eta};
}

}  // namespace sihd
