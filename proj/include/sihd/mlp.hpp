#pragma once

#include <span>
#include <vector>

#include "sihd/common.hpp"

namespace sihd {

// Fully connected network with SiLU between layers and a linear output.
// Parameters live in one flat vector: for each layer, W (out x in, row-major)
// followed by b.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> sizes);

    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    std::size_t parameter_count() const { return count_; }

    /// Scaled-uniform (He-style) weights, zero biases.
    void initialize(std::span<double> params, Rng& rng) const;

    // Pre-activations and activations of every layer, kept for backward().
    struct Cache {
        std::vector<Vec> pre;
        std::vector<Vec> act;  // act[0] is the input
    };

    Vec forward(std::span<const double> params, const Vec& x) const;
    Vec forward(std::span<const double> params, const Vec& x, Cache& cache) const;
    /// Accumulates dL/dparams into `grad` and optionally writes dL/dx.
    void backward(std::span<const double> params, const Cache& cache, const Vec& dout, std::span<double> grad,
                  Vec* dinput = nullptr) const;

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::size_t count_ = 0;
};

double silu(double x);
double silu_derivative(double x);

}  // namespace sihd
