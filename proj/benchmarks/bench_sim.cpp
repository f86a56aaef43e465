#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "fedsched/policy.hpp"
#include "fedsched/sim.hpp"

namespace {

using namespace fedsched;

sim::SelectionPolicy policy_by_index(const policy::PolicyConfig& config, std::int64_t index) {
    switch (index) {
        case 0: return sim::SelectionPolicy::uniform_k();
        case 1: return sim::SelectionPolicy::bernoulli_iid();
        case 2: return sim::SelectionPolicy::markov_policy(policy::optimal_policy(config).policy);
        default: return sim::SelectionPolicy::oldest_age_k();
    }
}

// Round throughput per policy kind at the headline configuration.
void bm_step_round(benchmark::State& state) {
    const policy::PolicyConfig config(100, 15, 10);
    const auto policy = policy_by_index(config, state.range(0));
    auto states = sim::initial_states(config, policy, sim::InitMode::RandomPhase, 1);
    std::vector<std::uint8_t> selected;
    std::int64_t round = 0;
    for (auto _ : state) {
        sim::step_round(states, config, policy, 1, round++, selected);
        benchmark::DoNotOptimize(selected.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_step_round)->Arg(0)->Arg(1)->Arg(2)->Arg(3);

void bm_run_simulation(benchmark::State& state) {
    const policy::PolicyConfig config(100, 15, 10);
    const auto policy = sim::SelectionPolicy::markov_policy(policy::optimal_policy(config).policy);
    const std::int64_t rounds = state.range(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sim::run_simulation(config, policy, rounds, rounds / 10, 1,
                                                     sim::InitMode::RandomPhase));
    }
    state.SetItemsProcessed(state.iterations() * rounds);
}
BENCHMARK(bm_run_simulation)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
