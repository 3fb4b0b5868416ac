// Serial vs OpenMP versions of the rate search and the evaluation matrix.
#include <benchmark/benchmark.h>

#include "streamsched/experiment.hpp"
#include "streamsched/simulator.hpp"

using namespace streamsched;

namespace {

const ModelRegistry& fixtures() {
    static const ModelRegistry reg = ModelRegistry::load_dir(STREAMSCHED_MODELS_DIR);
    return reg;
}

struct Case {
    Dataflow g;
    Schedule s;
};

const Case& star100() {
    static const Case c = [] {
        Case x;
        x.g = builtin_dag(BuiltinDag::Star, default_task_kinds(BuiltinDag::Star));
        x.s = make_schedule(x.g, 100, Allocator::MBA, Mapper::SAM, fixtures(), d_series_catalog(3));
        return x;
    }();
    return c;
}

ExperimentSpec linear_spec() {
    ExperimentSpec s;
    s.dag_name = "linear";
    s.dataflow = builtin_dag(BuiltinDag::Linear, default_task_kinds(BuiltinDag::Linear));
    s.rates = {50, 100};
    return s;
}

void BM_MaxRateSerial(benchmark::State& st) {
    const auto& c = star100();
    for (auto _ : st)
        benchmark::DoNotOptimize(find_max_stable_rate(c.g, c.s.mapping, c.s.cluster, fixtures(), 10, SimConfig{}));
}

void BM_MaxRateParallel(benchmark::State& st) {
    const auto& c = star100();
    for (auto _ : st)
        benchmark::DoNotOptimize(
            find_max_stable_rate_parallel(c.g, c.s.mapping, c.s.cluster, fixtures(), 10, SimConfig{}));
}

void BM_EvaluateSerial(benchmark::State& st) {
    const auto spec = linear_spec();
    for (auto _ : st) benchmark::DoNotOptimize(evaluate(spec, fixtures()));
}

void BM_EvaluateParallel(benchmark::State& st) {
    const auto spec = linear_spec();
    for (auto _ : st) benchmark::DoNotOptimize(evaluate_parallel(spec, fixtures()));
}

}  // namespace

BENCHMARK(BM_MaxRateSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxRateParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateSerial)->Unit(benchmark::kMillisecond)->Iterations(2);
BENCHMARK(BM_EvaluateParallel)->Unit(benchmark::kMillisecond)->Iterations(2);

BENCHMARK_MAIN();
