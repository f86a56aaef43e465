#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fedsched/errors.hpp"
#include "fedsched/fed.hpp"
#include "testutil.hpp"

using namespace fedsched;
using fl::ModelKind;
using fl::ModelSpec;
using fl::PartitionSpec;
using fl::TrainConfig;
using policy::PolicyConfig;
using sim::SelectionPolicy;

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.local_epochs = 0;
    CHECK_NOTHROW(cfg.validate());  // zero epochs means no local work
    cfg.local_epochs = -1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.lr0 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.lr_decay = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.lr_decay = 0.5;
    CHECK(cfg.learning_rate(0) == doctest::Approx(0.1));
    CHECK(cfg.learning_rate(3) == doctest::Approx(0.1 * 0.125));
}

TEST_CASE("aggregate is the arithmetic mean") {
    CHECK(fl::aggregate({{1, 3}, {3, 5}, {5, 1}}) == std::vector<double>{3, 3});
    CHECK(fl::aggregate({{2, -4}, {-2, 4}}) == std::vector<double>{0, 0});
    CHECK_THROWS_AS(fl::aggregate({}), ValidationError);
    CHECK_THROWS_AS(fl::aggregate({{1, 2}, {1}}), ValidationError);
}

TEST_CASE("aggregate is linear in its inputs") {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t width = 1 + gen() % 8;
        std::vector<std::vector<double>> updates(2 + gen() % 4,
                                                 std::vector<double>(width));
        for (auto& u : updates) {
            for (auto& v : u) v = normal(gen);
        }
        const double scale = normal(gen);
        auto scaled = updates;
        for (auto& u : scaled) {
            for (auto& v : u) v *= scale;
        }
        const auto base = fl::aggregate(updates);
        const auto after = fl::aggregate(scaled);
        for (std::size_t i = 0; i < width; ++i) {
            CHECK(after[i] == doctest::Approx(scale * base[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("local training with zero epochs returns the parameters unchanged") {
    const auto task = fl::generate_synthetic(4, 3, 60, 1.0, 5);
    const ModelSpec spec{ModelKind::Logistic, 4, 3, 0};
    const auto params = fl::init_params(spec, 1);
    std::vector<std::int32_t> shard(30);
    std::iota(shard.begin(), shard.end(), 0);
    TrainConfig cfg;
    cfg.local_epochs = 0;
    cfg.batch_size = 10;
    const auto out = fl::local_train(spec, params, task.train, shard, cfg, 0, 7);
    CHECK(out == params);
}

TEST_CASE("local training memorizes a single point") {
    const auto task = fl::generate_synthetic(5, 3, 30, 1.0, 2);
    const ModelSpec spec{ModelKind::Logistic, 5, 3, 0};
    auto params = fl::init_params(spec, 0);
    const std::vector<std::int32_t> shard{4};
    TrainConfig cfg;
    cfg.local_epochs = 100;
    cfg.batch_size = 1;
    cfg.lr0 = 0.5;
    cfg.lr_decay = 1.0;
    const auto before = params;
    const auto out = fl::local_train(spec, params, task.train, shard, cfg, 0, 3);
    CHECK(params == before);  // input untouched
    std::vector<double> grad(out.size());
    const double loss = fl::loss_and_grad(spec, out, task.train, shard, grad);
    CHECK(loss < 0.01);
}

TEST_CASE("local training validates the batch against the shard") {
    const auto task = fl::generate_synthetic(4, 2, 40, 1.0, 5);
    const ModelSpec spec{ModelKind::Logistic, 4, 2, 0};
    const auto params = fl::init_params(spec, 1);
    std::vector<std::int32_t> shard{1, 2, 3};
    TrainConfig cfg;
    cfg.batch_size = 4;
    CHECK_THROWS_AS(fl::local_train(spec, params, task.train, shard, cfg, 0, 0),
                    ValidationError);
    CHECK_THROWS_AS(fl::local_train(spec, params, task.train, {}, cfg, 0, 0),
                    ValidationError);
}

TEST_CASE("local training is deterministic in its stream") {
    const auto task = fl::generate_synthetic(6, 4, 100, 1.5, 8);
    const ModelSpec spec{ModelKind::Mlp, 6, 4, 5};
    const auto params = fl::init_params(spec, 2);
    std::vector<std::int32_t> shard(50);
    std::iota(shard.begin(), shard.end(), 10);
    TrainConfig cfg;
    cfg.batch_size = 16;
    const auto a = fl::local_train(spec, params, task.train, shard, cfg, 4, 99);
    const auto b = fl::local_train(spec, params, task.train, shard, cfg, 4, 99);
    const auto c = fl::local_train(spec, params, task.train, shard, cfg, 4, 100);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("diverging training reports the round") {
    const auto task = fl::generate_synthetic(4, 3, 60, 2.0, 5);
    const ModelSpec spec{ModelKind::Mlp, 4, 3, 6};
    const auto params = fl::init_params(spec, 1);
    std::vector<std::int32_t> shard(60);
    std::iota(shard.begin(), shard.end(), 0);
    TrainConfig cfg;
    cfg.batch_size = 20;
    cfg.local_epochs = 60;
    cfg.lr0 = 1e18;
    cfg.lr_decay = 1.0;
    bool caught = false;
    try {
        fl::local_train(spec, params, task.train, shard, cfg, 7, 1);
    } catch (const DivergenceError& e) {
        caught = true;
        CHECK(e.round == 7);
    }
    CHECK(caught);
}

namespace {

fl::FLRunHistory quick_run(std::uint64_t seed, const SelectionPolicy& policy_, int rounds,
                           double target = 0.95) {
    const auto task = fl::generate_synthetic(6, 4, 400, 3.0, 17);
    const PolicyConfig sched(10, 3, 4);
    const ModelSpec model{ModelKind::Logistic, 6, 4, 0};
    TrainConfig cfg;
    cfg.rounds = rounds;
    cfg.batch_size = 10;
    cfg.local_epochs = 2;
    cfg.target_accuracy = target;
    cfg.seed = seed;
    return fl::run_federated(task.train, task.test, PartitionSpec::iid(), sched, policy_,
                             model, cfg);
}

}  // namespace

TEST_CASE("federated runs are reproducible and well-formed") {
    const auto a = quick_run(5, SelectionPolicy::uniform_k(), 20);
    const auto b = quick_run(5, SelectionPolicy::uniform_k(), 20);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
    CHECK(a.n_selected == b.n_selected);
    REQUIRE(a.accuracy.size() == 20);
    for (const double acc : a.accuracy) {
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
    for (const int c : a.n_selected) CHECK(c == 3);
    if (a.rounds_to_target.has_value()) CHECK(*a.rounds_to_target <= 20);
}

TEST_CASE("idle rounds keep the model and are recorded") {
    const auto task = fl::generate_synthetic(4, 2, 80, 2.0, 3);
    const PolicyConfig sched(2, 1, 2);
    const ModelSpec model{ModelKind::Logistic, 4, 2, 0};
    TrainConfig cfg;
    cfg.rounds = 40;
    cfg.batch_size = 5;
    cfg.local_epochs = 1;
    cfg.seed = 11;
    const auto history = fl::run_federated(task.train, task.test, PartitionSpec::iid(), sched,
                                           SelectionPolicy::bernoulli_iid(), model, cfg);
    bool saw_idle = false;
    for (std::size_t t = 1; t < history.accuracy.size(); ++t) {
        if (history.n_selected[t] == 0) {
            saw_idle = true;
            CHECK(history.accuracy[t] == history.accuracy[t - 1]);
            CHECK(history.loss[t] == history.loss[t - 1]);
        }
    }
    CHECK(saw_idle);  // with p = 1/2 per client, idle rounds are near-certain
}

TEST_CASE("training loss descends on the convex task") {
    const auto history = quick_run(9, SelectionPolicy::uniform_k(), 30, 1.0);
    for (std::size_t t = 1; t < history.loss.size(); ++t) {
        CHECK(history.loss[t] <= history.loss[t - 1] * 1.01);
    }
    CHECK(history.loss.back() < history.loss.front());
}

TEST_CASE("a well-separated task reaches a 95 percent target") {
    const auto task = fl::generate_synthetic(10, 5, 2000, 4.0, 23);
    const PolicyConfig sched(100, 15, 10);
    const ModelSpec model{ModelKind::Logistic, 10, 5, 0};
    const auto markov = SelectionPolicy::markov_policy(policy::optimal_policy(sched).policy);
    for (const auto& policy_ : {SelectionPolicy::uniform_k(), markov}) {
        TrainConfig cfg;
        cfg.rounds = 60;
        cfg.batch_size = 20;
        cfg.local_epochs = 5;
        cfg.target_accuracy = 0.95;
        cfg.seed = 1;
        const auto history = fl::run_federated(task.train, task.test, PartitionSpec::iid(),
                                               sched, policy_, model, cfg);
        CHECK(history.rounds_to_target.has_value());
    }
}

TEST_CASE("federated run enforces shard-level batch feasibility") {
    const auto task = fl::generate_synthetic(4, 2, 50, 1.0, 3);
    const PolicyConfig sched(10, 2, 3);  // shards of 5 samples
    const ModelSpec model{ModelKind::Logistic, 4, 2, 0};
    TrainConfig cfg;
    cfg.batch_size = 6;
    CHECK_THROWS_AS(fl::run_federated(task.train, task.test, PartitionSpec::iid(), sched,
                                      SelectionPolicy::uniform_k(), model, cfg),
                    ValidationError);
}

TEST_CASE("participation rate stays near the nominal budget over a run") {
    const auto task = fl::generate_synthetic(4, 2, 400, 3.0, 29);
    const PolicyConfig sched(20, 4, 5);
    const ModelSpec model{ModelKind::Logistic, 4, 2, 0};
    const auto markov = SelectionPolicy::markov_policy(policy::optimal_policy(sched).policy);
    TrainConfig cfg;
    cfg.rounds = 400;
    cfg.batch_size = 10;
    cfg.local_epochs = 0;  // selection bookkeeping only, no training cost
    cfg.seed = 3;
    const auto history = fl::run_federated(task.train, task.test, PartitionSpec::iid(), sched,
                                           markov, model, cfg);
    double mean = 0.0;
    for (const int c : history.n_selected) mean += c;
    mean /= static_cast<double>(history.n_selected.size());
    CHECK(mean == doctest::Approx(4.0).epsilon(0.15));
}
