// serial reference against the OpenMP path of the simulator
#include <benchmark/benchmark.h>

#include "secord/simlab.hpp"

using namespace secord;

static SimConfig wz_config(bool parallel) {
    WZBinaryOpt o = wz_binary_optimize(0.25, 0.1);
    SimConfig cfg;
    cfg.scheme = Scheme::WynerZiv;
    cfg.instance = wz_binary_family(0.25, o.beta, o.gamma, o.lambda).inst;
    cfg.n = 6;
    cfg.rate = 0.6;
    cfg.trials = 2000;
    cfg.seed = 1;
    cfg.parallel = parallel;
    return cfg;
}

static void BM_simulate(benchmark::State& st) {
    SimConfig cfg = wz_config(st.range(0) != 0);
    for (auto _ : st) benchmark::DoNotOptimize(simulate(cfg).errors);
    st.SetItemsProcessed(static_cast<std::int64_t>(st.iterations() * cfg.trials));
}
BENCHMARK(BM_simulate)->Arg(0)->Arg(1)->ArgNames({"parallel"})->Unit(benchmark::kMillisecond);

static void BM_type_deviation(benchmark::State& st) {
    ProbVec p = make_pmf(Alphabet::range("X", 3), {0.2, 0.3, 0.5});
    for (auto _ : st) benchmark::DoNotOptimize(type_deviation_stats(p, {1000}, 2000, 3, {8, 10, false}));
}
BENCHMARK(BM_type_deviation)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
