#include "sihd/kernels.hpp"

#include <cmath>
#include <numbers>

namespace sihd::kernels {

namespace {

double cosine(const Vec& a, const Vec& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double similarity_entry(const Vec& a, const Vec& b, Similarity kind, double sigma) {
    if (kind == Similarity::cosine) return cosine(a, b);
    return std::exp(-squared_distance(a, b) / (2.0 * sigma * sigma));
}

// Per-sample product of 1D Gaussian kernels, evaluated for one point.
double product_kernel(const Vec& point, const Vec& sample, const Vec& bandwidth) {
    double log_k = 0.0;
    for (std::size_t k = 0; k < point.size(); ++k) {
        const double z = (point[k] - sample[k]) / bandwidth[k];
        log_k += -0.5 * z * z - std::log(bandwidth[k] * std::sqrt(2.0 * std::numbers::pi));
    }
    return std::exp(log_k);
}

// kernel_rows[i][n] = K(points[i] - samples[n])
std::vector<Vec> kernel_rows(std::span<const Vec> points, std::span<const Vec> samples, const Vec& bw,
                             bool parallel) {
    std::vector<Vec> rows(points.size(), Vec(samples.size()));
    const auto n_points = static_cast<long>(points.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < n_points; ++i) {
        for (std::size_t s = 0; s < samples.size(); ++s) {
            rows[static_cast<std::size_t>(i)][s] = product_kernel(points[static_cast<std::size_t>(i)], samples[s], bw);
        }
    }
    return rows;
}

SquareMatrix sq_dist_impl(std::span<const Vec> points, bool parallel) {
    SquareMatrix m{points.size(), Vec(points.size() * points.size(), 0.0)};
    const auto n = static_cast<long>(points.size());
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
    for (long i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < points.size(); ++j) {
            m(ui, j) = ui == j ? 0.0 : squared_distance(points[ui], points[j]);
        }
    }
    return m;
}

SquareMatrix similarity_impl(std::span<const Vec> points, Similarity kind, double sigma, bool parallel) {
    SquareMatrix m{points.size(), Vec(points.size() * points.size(), 0.0)};
    const auto n = static_cast<long>(points.size());
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
    for (long i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < points.size(); ++j) {
            m(ui, j) = ui == j ? 0.0 : similarity_entry(points[ui], points[j], kind, sigma);
        }
    }
    return m;
}

SquareMatrix pair_density_impl(std::span<const Vec> points, std::span<const Vec> first,
                               std::span<const Vec> second, const Vec& bw_first, const Vec& bw_second,
                               bool parallel) {
    const auto a = kernel_rows(points, first, bw_first, parallel);
    const auto b = kernel_rows(points, second, bw_second, parallel);
    const std::size_t v = points.size();
    const double inv_n = first.empty() ? 0.0 : 1.0 / static_cast<double>(first.size());
    SquareMatrix m{v, Vec(v * v, 0.0)};
    const auto nv = static_cast<long>(v);
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
    for (long i = 0; i < nv; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < v; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < first.size(); ++k) s += a[ui][k] * b[j][k];
            m(ui, j) = s * inv_n;
        }
    }
    return m;
}

Vec density_impl(std::span<const Vec> queries, std::span<const Vec> samples, const Vec& bw, bool parallel) {
    Vec out(queries.size(), 0.0);
    const double inv_n = samples.empty() ? 0.0 : 1.0 / static_cast<double>(samples.size());
    const auto nq = static_cast<long>(queries.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < nq; ++i) {
        double s = 0.0;
        for (const auto& x : samples) s += product_kernel(queries[static_cast<std::size_t>(i)], x, bw);
        out[static_cast<std::size_t>(i)] = s * inv_n;
    }
    return out;
}

}  // namespace

namespace serial {
SquareMatrix squared_distances(std::span<const Vec> points) { return sq_dist_impl(points, false); }
SquareMatrix similarity(std::span<const Vec> points, Similarity kind, double sigma) {
    return similarity_impl(points, kind, sigma, false);
}
SquareMatrix pair_density(std::span<const Vec> points, std::span<const Vec> first, std::span<const Vec> second,
                          const Vec& bandwidth_first, const Vec& bandwidth_second) {
    return pair_density_impl(points, first, second, bandwidth_first, bandwidth_second, false);
}
Vec density(std::span<const Vec> queries, std::span<const Vec> samples, const Vec& bandwidth) {
    return density_impl(queries, samples, bandwidth, false);
}
}  // namespace serial

namespace omp {
SquareMatrix squared_distances(std::span<const Vec> points) { return sq_dist_impl(points, true); }
SquareMatrix similarity(std::span<const Vec> points, Similarity kind, double sigma) {
    return similarity_impl(points, kind, sigma, true);
}
SquareMatrix pair_density(std::span<const Vec> points, std::span<const Vec> first, std::span<const Vec> second,
                          const Vec& bandwidth_first, const Vec& bandwidth_second) {
    return pair_density_impl(points, first, second, bandwidth_first, bandwidth_second, true);
}
Vec density(std::span<const Vec> queries, std::span<const Vec> samples, const Vec& bandwidth) {
    return density_impl(queries, samples, bandwidth, true);
}
}  // namespace omp

}  // namespace sihd::kernels
