#include <benchmark/benchmark.h>

#include <random>

#include "pclvd/builders.hpp"
#include "pclvd/induce.hpp"
#include "pclvd/kernels.hpp"
#include "pclvd/synthetic.hpp"

using namespace pclvd;

namespace {

struct HmmWork {
    HmmCircuit hmm;
    DataMatrix x;
    std::vector<std::size_t> rows;
};

// T = 32 token windows under an HMM with range(0) hidden states.
HmmWork hmm_work(std::size_t h) {
    const HmmSpec spec{32, h, 64, false};
    HmmWork w{build_hmm(spec, 1), {}, {}};
    w.x = sample_hmm(random_hmm_params(spec, 2), 32, 64, 2048, 3).tokens.to_matrix();
    w.rows = all_rows(w.x.rows);
    return w;
}

void BM_LogLikelihoodSerial(benchmark::State& state) {
    const auto w = hmm_work(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(serial::log_likelihoods(w.hmm.circuit, w.x, w.rows));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.rows.size()));
}

void BM_LogLikelihoodParallel(benchmark::State& state) {
    const auto w = hmm_work(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(parallel::log_likelihoods(w.hmm.circuit, w.x, w.rows));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.rows.size()));
}

void BM_FlowsSerial(benchmark::State& state) {
    const auto w = hmm_work(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(serial::accumulate_flows(w.hmm.circuit, w.x, w.rows));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.rows.size()));
}

void BM_FlowsParallel(benchmark::State& state) {
    const auto w = hmm_work(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(parallel::accumulate_flows(w.hmm.circuit, w.x, w.rows, false));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.rows.size()));
}

void BM_FlowsDeterministic(benchmark::State& state) {
    const auto w = hmm_work(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(parallel::accumulate_flows(w.hmm.circuit, w.x, w.rows, true));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.rows.size()));
}

EmbeddingMatrix points(std::size_t n, std::size_t d) {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> g;
    EmbeddingMatrix e(n, d);
    for (auto& v : e.values) v = g(rng);
    return e;
}

std::vector<double> centroids(std::size_t m, std::size_t d) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::vector<double> c(m * d);
    for (auto& v : c) v = g(rng);
    return c;
}

void BM_AssignSerial(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto e = points(20000, 64);
    const auto c = centroids(m, 64);
    std::vector<std::uint32_t> a;
    for (auto _ : state) benchmark::DoNotOptimize(serial::assign_nearest(e, c, m, a));
    state.SetItemsProcessed(state.iterations() * 20000);
}

void BM_AssignParallel(benchmark::State& state) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto e = points(20000, 64);
    const auto c = centroids(m, 64);
    std::vector<std::uint32_t> a;
    for (auto _ : state) benchmark::DoNotOptimize(parallel::assign_nearest(e, c, m, a));
    state.SetItemsProcessed(state.iterations() * 20000);
}

} // namespace

BENCHMARK(BM_LogLikelihoodSerial)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogLikelihoodParallel)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowsSerial)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowsParallel)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FlowsDeterministic)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssignSerial)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssignParallel)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
