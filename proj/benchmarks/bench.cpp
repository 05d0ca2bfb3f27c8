// Microbenchmarks for the hot paths: rank-variance scoring, one training
// epoch, and one planted-rank Monte-Carlo trial.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dris/certify.hpp"
#include "dris/dataset.hpp"
#include "dris/model.hpp"
#include "dris/scores.hpp"

namespace {

dris::RankMatrix random_rank_matrix(std::size_t n, std::size_t k,
                                    std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> losses(k, std::vector<double>(n));
    for (auto& col : losses)
        for (auto& v : col) v = u(gen);
    return dris::make_rank_matrix(losses, 1);
}

void BM_RankVariance(benchmark::State& state) {
    const auto rm = random_rank_matrix(static_cast<std::size_t>(state.range(0)),
                                       4, 42);
    for (auto _ : state) {
        auto s = dris::rank_variance(rm);
        benchmark::DoNotOptimize(s.values.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TrainEpoch(benchmark::State& state) {
    dris::SyntheticSpec sp;
    sp.n = static_cast<std::size_t>(state.range(0));
    sp.d = 20;
    sp.seed = 7;
    const auto ds = dris::generate_synthetic(sp);

    dris::ModelSpec spec;
    spec.kind = dris::model_kind::linear_squared_hinge;
    spec.input_dim = ds.dim;
    spec.num_classes = ds.num_classes;
    spec.l2_lambda = 0.1;

    dris::TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = ds.n;
    cfg.lr = 0.01;
    cfg.schedule = dris::lr_schedule::decreasing_clamped;
    cfg.seed = 7;

    for (auto _ : state) {
        auto m = dris::train(spec, cfg, ds);
        benchmark::DoNotOptimize(m.params.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PlantedTrial(benchmark::State& state) {
    dris::TheoremParams p;
    p.N = static_cast<std::size_t>(state.range(0));
    p.K = 8;
    p.tau = 0.1;
    p.gamma = 0.01;
    p.tau_bdry = 0.45;
    p.eps = 0.25;
    p.alpha_trim = 0.2;
    p.alpha = 0.25;
    p.v_tail = 0.005;
    const auto cls = dris::planted_assignment(p, dris::PlantedMix{});
    std::mt19937_64 gen(123);
    std::vector<double> out;
    for (auto _ : state) {
        dris::planted_trial_ranks(cls, p, gen, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_RankVariance)->Arg(2000)->Arg(20000);
BENCHMARK(BM_TrainEpoch)->Arg(2000);
BENCHMARK(BM_PlantedTrial)->Arg(400)->Arg(2000);

BENCHMARK_MAIN();
