#include "sihd/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sihd {

VarianceSchedule make_schedule(ScheduleKind kind, std::size_t steps) {
    if (steps < 2) throw ValidationError("diffusion needs at least 2 steps");
    VarianceSchedule s;
    s.kind = kind;
    s.beta.resize(steps);
    const double K = static_cast<double>(steps);
    if (kind == ScheduleKind::linear) {
        const double lo = 1e-4, hi = 2e-2;
        for (std::size_t i = 0; i < steps; ++i) s.beta[i] = lo + (hi - lo) * static_cast<double>(i) / (K - 1.0);
    } else {
        const double offset = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / K + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
            return c * c;
        };
        for (std::size_t i = 0; i < steps; ++i) {
            const double k = static_cast<double>(i + 1);
            s.beta[i] = std::clamp(1.0 - f(k) / f(k - 1.0), 1e-8, 0.999);
        }
    }
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        prod *= 1.0 - s.beta[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

std::string schedule_name(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind parse_schedule(const std::string& name) {
    if (name == "linear") return ScheduleKind::linear;
    if (name == "cosine") return ScheduleKind::cosine;
    throw ValidationError("unknown schedule '" + name + "' (expected linear or cosine)");
}

Vec forward_diffuse(const Vec& x0, std::size_t k, const VarianceSchedule& schedule, const Vec& eps) {
    if (x0.size() != eps.size()) throw ValidationError("forward_diffuse: noise shape mismatch");
    if (k > schedule.steps()) throw ValidationError("forward_diffuse: step out of range");
    if (k == 0) return x0;
    const double a = std::sqrt(schedule.alpha_bar_at(k));
    const double b = std::sqrt(1.0 - schedule.alpha_bar_at(k));
    Vec out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

Normalizer Normalizer::fit(const std::vector<Vec>& elements) {
    if (elements.empty()) throw ValidationError("cannot fit a normalizer to no data");
    Normalizer n{elements.front(), elements.front()};
    for (const auto& e : elements) {
        if (e.size() != n.lo.size()) throw ValidationError("normalizer: inconsistent element size");
        for (std::size_t d = 0; d < e.size(); ++d) {
            n.lo[d] = std::min(n.lo[d], e[d]);
            n.hi[d] = std::max(n.hi[d], e[d]);
        }
    }
    return n;
}

Vec Normalizer::normalize(const Vec& e) const {
    Vec out(e.size());
    for (std::size_t d = 0; d < e.size(); ++d) {
        const double span = hi[d] - lo[d];
        out[d] = span > 0.0 ? 2.0 * (e[d] - lo[d]) / span - 1.0 : e[d] - lo[d];
    }
    return out;
}

Vec Normalizer::denormalize(const Vec& e) const {
    Vec out(e.size());
    for (std::size_t d = 0; d < e.size(); ++d) {
        const double span = hi[d] - lo[d];
        out[d] = span > 0.0 ? (e[d] + 1.0) * span / 2.0 + lo[d] : e[d] + lo[d];
    }
    return out;
}

Denoiser::Denoiser(DenoiserShape shape)
    : shape_(shape),
      mlp_({shape.flat_size() + shape.cond_dim + shape.step_dim, shape.hidden, shape.hidden, shape.flat_size()}) {
    params.assign(parameter_count(), 0.0);
}

void Denoiser::initialize(Rng& rng) {
    params.assign(parameter_count(), 0.0);
    mlp_.initialize(std::span<double>(params.data(), mlp_.parameter_count()), rng);
    const std::size_t c = shape_.cond_dim;
    double* cond = params.data() + mlp_.parameter_count();
    for (std::size_t i = 0; i < c; ++i) cond[i] = standard_normal(rng);         // W_c
    for (std::size_t i = 0; i < c; ++i) cond[2 * c + i] = 0.1 * standard_normal(rng);  // null
}

Vec Denoiser::embed(double y) const {
    const std::size_t c = shape_.cond_dim;
    const double* w = params.data() + mlp_.parameter_count();
    Vec e(c);
    for (std::size_t i = 0; i < c; ++i) e[i] = w[i] * y + w[c + i];
    return e;
}

Vec Denoiser::null_embedding() const {
    const std::size_t c = shape_.cond_dim;
    const double* w = params.data() + mlp_.parameter_count() + 2 * c;
    return Vec(w, w + c);
}

Vec Denoiser::blend(double y, double omega) const {
    if (omega == 0.0) return embed(y);
    if (omega == 1.0) return null_embedding();
    Vec e = embed(y);
    const Vec n = null_embedding();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = (1.0 - omega) * e[i] + omega * n[i];
    return e;
}

Vec Denoiser::step_embedding(std::size_t k) const {
    const std::size_t d = shape_.step_dim;
    const std::size_t half = d / 2;
    Vec e(d, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(1000.0) * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(half, 1)));
        e[i] = std::sin(static_cast<double>(k) * freq);
        e[half + i] = std::cos(static_cast<double>(k) * freq);
    }
    return e;
}

namespace {

Vec network_input(const Denoiser& m, const Vec& x, const Vec& cond, std::size_t k) {
    const auto& s = m.shape();
    if (x.size() != s.flat_size()) throw ValidationError("denoiser input shape mismatch");
    if (cond.size() != s.cond_dim) throw ValidationError("condition embedding size mismatch");
    Vec in;
    in.reserve(x.size() + s.cond_dim + s.step_dim);
    in.insert(in.end(), x.begin(), x.end());
    in.insert(in.end(), cond.begin(), cond.end());
    const Vec step = m.step_embedding(k);
    in.insert(in.end(), step.begin(), step.end());
    return in;
}

std::span<const double> mlp_params(const Denoiser& m) {
    return {m.params.data(), m.network().parameter_count()};
}

}  // namespace

Vec Denoiser::predict(const Vec& x, const Vec& cond, std::size_t k) const {
    if (params.size() != parameter_count()) throw ValidationError("denoiser parameters not initialized");
    return mlp_.forward(mlp_params(*this), network_input(*this, x, cond, k));
}

Vec cfg_predict(const Denoiser& model, const Vec& x, double y, double omega, std::size_t k, GuidanceMode mode) {
    if (mode == GuidanceMode::embedding) return model.predict(x, model.blend(y, omega), k);
    if (omega == 0.0) return model.predict(x, model.embed(y), k);
    if (omega == 1.0) return model.predict(x, model.null_embedding(), k);
    Vec cond = model.predict(x, model.embed(y), k);
    const Vec uncond = model.predict(x, model.null_embedding(), k);
    for (std::size_t i = 0; i < cond.size(); ++i) cond[i] = (1.0 - omega) * cond[i] + omega * uncond[i];
    return cond;
}

Vec ddpm_mean(const Vec& x, const Vec& eps_hat, std::size_t k, const VarianceSchedule& schedule, double clip) {
    if (k < 1 || k > schedule.steps()) throw ValidationError("reverse step out of range");
    if (eps_hat.size() != x.size()) throw ValidationError("noise estimate shape mismatch");
    const double beta = schedule.beta_at(k);
    const double abar = schedule.alpha_bar_at(k);
    Vec mean(x.size());
    if (clip <= 0.0) {
        const double coef = beta / std::sqrt(1.0 - abar);
        const double scale = 1.0 / std::sqrt(1.0 - beta);
        for (std::size_t i = 0; i < x.size(); ++i) mean[i] = scale * (x[i] - coef * eps_hat[i]);
        return mean;
    }
    // Same mean written through x0 = (x - sqrt(1 - abar) eps) / sqrt(abar).
    const double abar_prev = schedule.alpha_bar_at(k - 1);
    const double c0 = std::sqrt(abar_prev) * beta / (1.0 - abar);
    const double ck = std::sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar);
    const double s1 = std::sqrt(1.0 - abar), s0 = std::sqrt(abar);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = std::clamp((x[i] - s1 * eps_hat[i]) / s0, -clip, clip);
        mean[i] = c0 * x0 + ck * x[i];
    }
    return mean;
}

Vec reverse_step(const Denoiser& model, const Vec& x, double y, double omega, std::size_t k,
                 const VarianceSchedule& schedule, Rng& rng, GuidanceMode mode, double clip) {
    Vec mean = ddpm_mean(x, cfg_predict(model, x, y, omega, k, mode), k, schedule, clip);
    if (k > 1) {
        const double sd = std::sqrt(schedule.beta_at(k));
        for (double& v : mean) v += sd * standard_normal(rng);
    }
    return mean;
}

Vec sample_sequence(const Denoiser& model, double y, double omega, const VarianceSchedule& schedule, Rng& rng,
                    const std::function<void(Vec&)>& constrain, GuidanceMode mode, double clip) {
    Vec x(model.shape().flat_size());
    for (double& v : x) v = standard_normal(rng);
    if (constrain) constrain(x);
    for (std::size_t k = schedule.steps(); k >= 1; --k) {
        x = reverse_step(model, x, y, omega, k, schedule, rng, mode, clip);
        if (constrain) constrain(x);
    }
    return x;
}

double reward_condition(double cumulative_reward, double r_max) {
    const double scale = std::abs(r_max);
    if (scale == 0.0) return 0.0;
    return std::clamp(cumulative_reward / scale, -1.0, 1.0);
}

double gain_condition(const EncodingTree& tree, NodeId alpha) {
    if (alpha == kNoNode || alpha >= tree.size() || alpha == EncodingTree::kRoot) {
        throw ValidationError("unresolved community for structural conditioning");
    }
    const std::size_t h = tree.node(alpha).height;
    double best = 0.0;
    for (NodeId n : tree.nodes_at_height(h)) {
        if (n != EncodingTree::kRoot) best = std::max(best, node_gain(tree, n));
    }
    return best > 0.0 ? node_gain(tree, alpha) / best : 0.0;
}

double EntropyTerms::lower_bound() const {
    double v = h_s;
    for (std::size_t i = 0; i < eta.size() && i < layer_entropy.size(); ++i) v -= eta[i] * layer_entropy[i];
    return v;
}

LossResult training_loss(const Denoiser& model, const std::vector<TrainingExample>& batch, std::size_t layer,
                         double reg_eta, const std::optional<EntropyTerms>& terms) {
    LossResult r;
    r.grad.assign(model.parameter_count(), 0.0);
    const auto& shape = model.shape();
    const std::size_t D = shape.flat_size();
    const std::size_t c = shape.cond_dim;
    const std::size_t mlp_count = model.network().parameter_count();
    double total_weight = 0.0;
    for (const auto& ex : batch) total_weight += ex.weight;
    if (total_weight > 0.0) {
        const auto& net = model.network();
        Mlp::Cache cache;
        Vec dinput;
        std::span<double> grad_mlp(r.grad.data(), mlp_count);
        for (const auto& ex : batch) {
            if (ex.noised.size() != D || ex.noise.size() != D) throw ValidationError("training example shape mismatch");
            if (ex.weight == 0.0) continue;
            const Vec cond = ex.null_condition ? model.null_embedding() : model.embed(ex.y);
            const Vec pred = net.forward(mlp_params(model), network_input(model, ex.noised, cond, ex.k), cache);
            const double scale = ex.weight / (total_weight * static_cast<double>(D));
            Vec dout(D);
            for (std::size_t i = 0; i < D; ++i) {
                const double diff = pred[i] - ex.noise[i];
                r.mse += scale * diff * diff;
                dout[i] = 2.0 * scale * diff;
            }
            net.backward(mlp_params(model), cache, dout, grad_mlp, &dinput);
            double* g = r.grad.data() + mlp_count;
            for (std::size_t i = 0; i < c; ++i) {
                const double dc = dinput[D + i];
                if (ex.null_condition) {
                    g[2 * c + i] += dc;
                } else {
                    g[i] += dc * ex.y;
                    g[c + i] += dc;
                }
            }
        }
    }
    r.loss = r.mse;
    if (layer == 1 && terms) r.loss -= reg_eta * terms->lower_bound();
    return r;
}

}  // namespace sihd
