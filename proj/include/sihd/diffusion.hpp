#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sihd/common.hpp"
#include "sihd/encoding_tree.hpp"
#include "sihd/mlp.hpp"

namespace sihd {

enum class ScheduleKind { linear, cosine };

struct VarianceSchedule {
    ScheduleKind kind = ScheduleKind::cosine;
    Vec beta;       // beta[k - 1] for k = 1..K
    Vec alpha_bar;  // alpha_bar[k - 1]

    std::size_t steps() const { return beta.size(); }
    double beta_at(std::size_t k) const { return beta.at(k - 1); }
    /// 1 at k = 0.
    double alpha_bar_at(std::size_t k) const { return k == 0 ? 1.0 : alpha_bar.at(k - 1); }
};

VarianceSchedule make_schedule(ScheduleKind kind, std::size_t steps);
std::string schedule_name(ScheduleKind kind);
ScheduleKind parse_schedule(const std::string& name);

/// x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) eps; k = 0 returns x0.
Vec forward_diffuse(const Vec& x0, std::size_t k, const VarianceSchedule& schedule, const Vec& eps);

// Per-dimension affine map of raw elements into [-1, 1].
struct Normalizer {
    Vec lo;
    Vec hi;

    static Normalizer fit(const std::vector<Vec>& elements);
    Vec normalize(const Vec& element) const;
    Vec denormalize(const Vec& element) const;
    std::size_t dim() const { return lo.size(); }
};

struct DenoiserShape {
    std::size_t seq_len = 0;
    std::size_t elem_dim = 0;
    std::size_t cond_dim = 16;
    std::size_t step_dim = 16;
    std::size_t hidden = 128;

    std::size_t flat_size() const { return seq_len * elem_dim; }
};

// Noise predictor eps(x, c, k) over flattened fixed-length sequences. The
// condition embedding is W_c y + b_c for a scalar y, or the learned null
// vector. Parameter layout: [mlp | W_c | b_c | null].
class Denoiser {
public:
    Denoiser() = default;
    explicit Denoiser(DenoiserShape shape);

    const DenoiserShape& shape() const { return shape_; }
    const Mlp& network() const { return mlp_; }
    std::size_t parameter_count() const { return mlp_.parameter_count() + 3 * shape_.cond_dim; }

    Vec params;

    void initialize(Rng& rng);

    Vec embed(double y) const;
    Vec null_embedding() const;
    /// (1 - omega) embed(y) + omega null.
    Vec blend(double y, double omega) const;
    Vec step_embedding(std::size_t k) const;

    /// Network evaluation for an explicit condition embedding.
    Vec predict(const Vec& x, const Vec& cond, std::size_t k) const;

private:
    DenoiserShape shape_;
    Mlp mlp_;
};

enum class GuidanceMode { embedding, output };

/// Classifier-free guided noise prediction. In embedding mode the network sees
/// the blended condition; in output mode the two branch predictions are mixed.
Vec cfg_predict(const Denoiser& model, const Vec& x, double y, double omega, std::size_t k,
                GuidanceMode mode = GuidanceMode::embedding);

// Data lives in [-1, 1] after normalization; samplers clip the implied x0
// estimate to this range.
inline constexpr double kSampleClip = 1.0;

/// One ancestral DDPM step from k to k - 1; no noise is added at k = 1.
/// clip > 0 bounds the implied x0 estimate to [-clip, clip] before forming the mean.
Vec reverse_step(const Denoiser& model, const Vec& x, double y, double omega, std::size_t k,
                 const VarianceSchedule& schedule, Rng& rng, GuidanceMode mode = GuidanceMode::embedding,
                 double clip = 0.0);

/// Posterior mean given a noise estimate. Without clipping this is
/// (x - beta_k / sqrt(1 - abar_k) eps) / sqrt(alpha_k).
Vec ddpm_mean(const Vec& x, const Vec& eps_hat, std::size_t k, const VarianceSchedule& schedule, double clip = 0.0);

/// Full K-step rollout from Gaussian noise. `constrain` (if set) overwrites
/// known positions after initialization and after every step.
Vec sample_sequence(const Denoiser& model, double y, double omega, const VarianceSchedule& schedule, Rng& rng,
                    const std::function<void(Vec&)>& constrain = {}, GuidanceMode mode = GuidanceMode::embedding,
                    double clip = kSampleClip);

/// Cumulative reward scaled by |r_max| and clamped to [-1, 1].
double reward_condition(double cumulative_reward, double r_max);
/// node_gain(alpha) over the largest gain among nodes of alpha's height.
double gain_condition(const EncodingTree& tree, NodeId alpha);

struct TrainingExample {
    Vec noised;
    Vec noise;
    std::size_t k = 1;
    double y = 0.0;
    bool null_condition = false;
    double weight = 1.0;
};

struct EntropyTerms {
    double h_s = 0.0;
    Vec layer_entropy;  // H(U_h)
    Vec eta;            // eta_h

    /// H(S) - sum_h eta_h H(U_h).
    double lower_bound() const;
};

struct LossResult {
    double loss = 0.0;
    double mse = 0.0;
    Vec grad;
};

/// Weighted mean squared noise-prediction error over the batch (weights
/// normalized to their sum), minus reg_eta * lower_bound() when the layer is 1
/// and entropy terms are given. Gradients cover the MSE term.
LossResult training_loss(const Denoiser& model, const std::vector<TrainingExample>& batch, std::size_t layer,
                         double reg_eta, const std::optional<EntropyTerms>& terms);

}  // namespace sihd
