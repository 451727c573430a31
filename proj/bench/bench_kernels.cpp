#include <benchmark/benchmark.h>

#include "sihd/encoding_tree.hpp"
#include "sihd/kernels.hpp"
#include "sihd/state_graph.hpp"

using namespace sihd;

namespace {

std::vector<Vec> cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec> out(n, Vec(d));
    for (auto& p : out)
        for (double& x : p) x = standard_normal(rng);
    return out;
}

template <bool Parallel>
void BM_Similarity(benchmark::State& state) {
    const auto pts = cloud(static_cast<std::size_t>(state.range(0)), 2, 1);
    for (auto _ : state) {
        auto m = Parallel ? kernels::omp::similarity(pts, kernels::Similarity::rbf, 1.0)
                          : kernels::serial::similarity(pts, kernels::Similarity::rbf, 1.0);
        benchmark::DoNotOptimize(m.values.data());
    }
}

template <bool Parallel>
void BM_PairDensity(benchmark::State& state) {
    const auto verts = cloud(64, 2, 2);
    const auto first = cloud(static_cast<std::size_t>(state.range(0)), 2, 3);
    const auto second = cloud(static_cast<std::size_t>(state.range(0)), 2, 4);
    const Vec bw{0.5, 0.5};
    for (auto _ : state) {
        auto m = Parallel ? kernels::omp::pair_density(verts, first, second, bw, bw)
                          : kernels::serial::pair_density(verts, first, second, bw, bw);
        benchmark::DoNotOptimize(m.values.data());
    }
}

void BM_Hcse(benchmark::State& state) {
    const auto pts = cloud(static_cast<std::size_t>(state.range(0)), 2, 5);
    const auto g = build_knn_graph(pts, 6, kernels::Similarity::rbf);
    for (auto _ : state) benchmark::DoNotOptimize(hcse_optimize(g, 3).size());
}

}  // namespace

BENCHMARK(BM_Similarity<false>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_Similarity<true>)->Arg(64)->Arg(256)->Arg(1024);
BENCHMARK(BM_PairDensity<false>)->Arg(256)->Arg(2048);
BENCHMARK(BM_PairDensity<true>)->Arg(256)->Arg(2048);
BENCHMARK(BM_Hcse)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
