#include <benchmark/benchmark.h>

#include <cstdint>
#include <numeric>
#include <vector>

#include "fedsched/data.hpp"
#include "fedsched/fed.hpp"
#include "fedsched/model.hpp"

namespace {

using namespace fedsched;

struct Fixture {
    fl::SyntheticTask task = fl::generate_synthetic(20, 10, 6000, 2.0, 12345, 2000);
    fl::ModelSpec logistic{fl::ModelKind::Logistic, 20, 10, 0};
    fl::ModelSpec mlp{fl::ModelKind::Mlp, 20, 10, 64};
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

void bm_loss_and_grad(benchmark::State& state) {
    const auto& f = fixture();
    const auto& spec = state.range(0) == 0 ? f.logistic : f.mlp;
    const auto params = fl::init_params(spec, 7);
    std::vector<double> grad(params.size());
    std::vector<std::int32_t> batch(50);
    std::iota(batch.begin(), batch.end(), 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fl::loss_and_grad(spec, params, f.task.train, batch, grad));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(bm_loss_and_grad)->Arg(0)->Arg(1);

void bm_evaluate(benchmark::State& state) {
    const auto& f = fixture();
    const auto params = fl::init_params(f.logistic, 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fl::evaluate(f.logistic, params, f.task.test));
    }
    state.SetItemsProcessed(state.iterations() * f.task.test.count);
}
BENCHMARK(bm_evaluate);

void bm_local_train(benchmark::State& state) {
    const auto& f = fixture();
    const auto params = fl::init_params(f.logistic, 7);
    std::vector<std::int32_t> shard(60);
    std::iota(shard.begin(), shard.end(), 0);
    fl::TrainConfig config;
    config.local_epochs = 5;
    config.batch_size = 50;
    for (auto _ : state) {
        benchmark::DoNotOptimize(fl::local_train(f.logistic, params, f.task.train, shard,
                                                 config, 0, 99));
    }
}
BENCHMARK(bm_local_train);

void bm_run_federated(benchmark::State& state) {
    const auto& f = fixture();
    fl::TrainConfig config;
    config.rounds = state.range(0);
    config.local_epochs = 5;
    config.batch_size = 50;
    config.lr0 = 0.02;
    config.seed = 1;
    const policy::PolicyConfig sched(100, 15, 10);
    const auto markov = sim::SelectionPolicy::markov_policy(policy::optimal_policy(sched).policy);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fl::run_federated(f.task.train, f.task.test,
                                                   fl::PartitionSpec::dirichlet(0.6), sched,
                                                   markov, f.logistic, config));
    }
    state.SetItemsProcessed(state.iterations() * config.rounds);
}
BENCHMARK(bm_run_federated)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
