#pragma once

// Data-parallel inner loops. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels::omp; the OpenMP versions
// partition the outer loop only, so their results are bit-identical to the
// serial ones. Tests compare the two, bench/ times them.

#include <span>

#include "sihd/common.hpp"

namespace sihd::kernels {

// Row-major n x n matrix.
struct SquareMatrix {
    std::size_t n = 0;
    Vec values;
    double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

enum class Similarity { cosine, rbf };

namespace serial {
SquareMatrix squared_distances(std::span<const Vec> points);
/// rbf: exp(-d^2 / (2 sigma^2)); cosine: x.y / (|x||y|). Diagonal is zero.
SquareMatrix similarity(std::span<const Vec> points, Similarity kind, double sigma);
/// Product Gaussian KDE over paired samples: out(i, j) is the joint density of
/// (points[i], points[j]) given samples (first[n], second[n]).
SquareMatrix pair_density(std::span<const Vec> points, std::span<const Vec> first, std::span<const Vec> second,
                          const Vec& bandwidth_first, const Vec& bandwidth_second);
/// Product Gaussian KDE evaluated at each query point.
Vec density(std::span<const Vec> queries, std::span<const Vec> samples, const Vec& bandwidth);
}  // namespace serial

namespace omp {
SquareMatrix squared_distances(std::span<const Vec> points);
SquareMatrix similarity(std::span<const Vec> points, Similarity kind, double sigma);
SquareMatrix pair_density(std::span<const Vec> points, std::span<const Vec> first, std::span<const Vec> second,
                          const Vec& bandwidth_first, const Vec& bandwidth_second);
Vec density(std::span<const Vec> queries, std::span<const Vec> samples, const Vec& bandwidth);
}  // namespace omp

using omp::density;
using omp::pair_density;
using omp::similarity;
using omp::squared_distances;

}  // namespace sihd::kernels
