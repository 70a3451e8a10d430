#include "chorchain/harness.hpp"

#include <benchmark/benchmark.h>

using namespace chorchain;

namespace {

ScenarioConfig batch(std::size_t reps)
{
    ScenarioConfig c;
    c.model_id = 4;
    c.reps = reps;
    return c;
}

void BM_BatchSerial(benchmark::State& state)
{
    const auto cfg = batch(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(run_batch_serial(cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BatchOpenMP(benchmark::State& state)
{
    const auto cfg = batch(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(run_batch(cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

} // namespace

BENCHMARK(BM_BatchSerial)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchOpenMP)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
