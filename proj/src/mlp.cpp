#include "sihd/mlp.hpp"

#include <cmath>

namespace sihd {

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_derivative(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ValidationError("network needs at least an input and an output size");
    for (std::size_t s : sizes_)
        if (s == 0) throw ValidationError("layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(count_);
        count_ += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
}

void Mlp::initialize(std::span<double> params, Rng& rng) const {
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        double* w = params.data() + offsets_[l];
        for (std::size_t i = 0; i < in * out; ++i) w[i] = dist(rng);
        for (std::size_t i = 0; i < out; ++i) w[in * out + i] = 0.0;
    }
}

Vec Mlp::forward(std::span<const double> params, const Vec& x) const {
    Cache cache;
    return forward(params, x, cache);
}

Vec Mlp::forward(std::span<const double> params, const Vec& x, Cache& cache) const {
    if (x.size() != input_size()) throw ValidationError("network input size mismatch");
    if (params.size() != count_) throw ValidationError("network parameter count mismatch");
    const std::size_t layers = sizes_.size() - 1;
    cache.pre.resize(layers);
    cache.act.resize(layers + 1);
    cache.act[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        const double* w = params.data() + offsets_[l];
        const double* b = w + in * out;
        const Vec& a = cache.act[l];
        Vec& z = cache.pre[l];
        z.assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b[o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) acc += row[i] * a[i];
            z[o] = acc;
        }
        Vec& next = cache.act[l + 1];
        next = z;
        if (l + 1 < layers)
            for (double& v : next) v = silu(v);
    }
    return cache.act.back();
}

void Mlp::backward(std::span<const double> params, const Cache& cache, const Vec& dout, std::span<double> grad,
                   Vec* dinput) const {
    const std::size_t layers = sizes_.size() - 1;
    if (dout.size() != output_size()) throw ValidationError("network output gradient size mismatch");
    Vec delta = dout;
    for (std::size_t l = layers; l-- > 0;) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        if (l + 1 < layers) {
            for (std::size_t o = 0; o < out; ++o) delta[o] *= silu_derivative(cache.pre[l][o]);
        }
        const double* w = params.data() + offsets_[l];
        double* gw = grad.data() + offsets_[l];
        double* gb = gw + in * out;
        const Vec& a = cache.act[l];
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) grow[i] += d * a[i];
        }
        if (l == 0 && !dinput) break;
        Vec prev(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            const double* row = w + o * in;
            for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * d;
        }
        delta = std::move(prev);
    }
    if (dinput) *dinput = std::move(delta);
}

}  // namespace sihd
