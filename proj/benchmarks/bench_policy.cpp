#include <benchmark/benchmark.h>

#include "fedsched/policy.hpp"

namespace {

using namespace fedsched;

void bm_optimal_policy(benchmark::State& state) {
    const policy::PolicyConfig config(100, 15, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(policy::optimal_policy(config));
    }
}
BENCHMARK(bm_optimal_policy)->Arg(3)->Arg(10);

void bm_return_time_moments(benchmark::State& state) {
    const auto markov = policy::optimal_policy({100, 15, static_cast<int>(state.range(0))}).policy;
    for (auto _ : state) {
        benchmark::DoNotOptimize(policy::return_time_moments(markov));
    }
}
BENCHMARK(bm_return_time_moments)->Arg(10)->Arg(100);

void bm_return_time_distribution(benchmark::State& state) {
    const auto markov = policy::optimal_policy({100, 15, 10}).policy;
    for (auto _ : state) {
        benchmark::DoNotOptimize(policy::return_time_distribution(markov, 200));
    }
}
BENCHMARK(bm_return_time_distribution);

void bm_grid_search(benchmark::State& state) {
    const policy::PolicyConfig config(100, 15, static_cast<int>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(policy::grid_search_optimum(config, 200));
    }
}
BENCHMARK(bm_grid_search)->Arg(1)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
