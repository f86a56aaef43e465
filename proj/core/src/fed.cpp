#include "fedsched/fed.hpp"

#include <algorithm>
#include <cmath>

#include "fedsched/errors.hpp"
#include "fedsched/rng.hpp"

namespace fedsched::fl {

namespace {

constexpr std::uint64_t kShardTag = rng::stream_tag("shard");
constexpr std::uint64_t kInitTag = rng::stream_tag("model-init");
constexpr std::uint64_t kSchedTag = rng::stream_tag("schedule");
constexpr std::uint64_t kLocalTag = rng::stream_tag("local");

bool all_finite(std::span<const double> values) {
    for (const double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

void TrainConfig::validate() const {
    if (rounds < 1) throw ValidationError("train config: rounds must be positive");
    if (local_epochs < 0) throw ValidationError("train config: local_epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be positive");
    if (!(lr0 > 0.0)) throw ValidationError("train config: lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
        throw ValidationError("train config: lr_decay must be in (0, 1]");
    }
    if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) {
        throw ValidationError("train config: target_accuracy must be in (0, 1]");
    }
}

double TrainConfig::learning_rate(std::int64_t round) const {
    return lr0 * std::pow(lr_decay, static_cast<double>(round));
}

std::vector<double> local_train(const ModelSpec& spec, std::span<const double> start,
                                const Dataset& data, std::span<const std::int32_t> shard,
                                const TrainConfig& config, std::int64_t round,
                                std::uint64_t client_stream) {
    config.validate();
    if (shard.empty()) throw ValidationError("local train: empty shard");
    if (static_cast<std::size_t>(config.batch_size) > shard.size()) {
        throw ValidationError("local train: batch_size exceeds shard size");
    }

    std::vector<double> params(start.begin(), start.end());
    std::vector<double> grad(params.size());
    std::vector<std::int32_t> order(shard.begin(), shard.end());
    const double lr = config.learning_rate(round);

    for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
        rng::SplitMix64 engine(
            rng::derive(client_stream, static_cast<std::uint64_t>(epoch)));
        engine.shuffle(order);
        const std::size_t total = order.size();
        for (std::size_t at = 0; at < total; at += config.batch_size) {
            const std::size_t len = std::min<std::size_t>(config.batch_size, total - at);
            const double loss = loss_and_grad(
                spec, params, data, {order.data() + at, len}, grad);
            if (!std::isfinite(loss)) {
                throw DivergenceError("local train: loss is not finite", round);
            }
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        }
    }
    if (!all_finite(params)) {
        throw DivergenceError("local train: parameters are not finite", round);
    }
    return params;
}

std::vector<double> aggregate(const std::vector<std::vector<double>>& updates) {
    if (updates.empty()) throw ValidationError("aggregate: no updates");
    const std::size_t dim = updates.front().size();
    for (const auto& u : updates) {
        if (u.size() != dim) throw ValidationError("aggregate: update size mismatch");
    }
    std::vector<double> mean(dim, 0.0);
    for (const auto& u : updates) {
        for (std::size_t i = 0; i < dim; ++i) mean[i] += u[i];
    }
    const double inv = 1.0 / static_cast<double>(updates.size());
    for (auto& v : mean) v *= inv;
    return mean;
}

FLRunHistory run_federated(const Dataset& train, const Dataset& test,
                           const PartitionSpec& partition_spec,
                           const policy::PolicyConfig& sched_config,
                           const sim::SelectionPolicy& policy, const ModelSpec& model,
                           const TrainConfig& config) {
    config.validate();
    model.validate();
    train.validate();
    test.validate();
    if (train.dim != test.dim) throw ValidationError("federated run: train/test dim mismatch");

    const auto shards =
        partition(train, partition_spec, sched_config.n, rng::derive(config.seed, kShardTag));
    for (const auto& shard : shards) {
        if (static_cast<std::size_t>(config.batch_size) > shard.size()) {
            throw ValidationError("federated run: batch_size exceeds the smallest shard");
        }
    }

    auto params = init_params(model, rng::derive(config.seed, kInitTag));
    auto states = sim::initial_states(sched_config, policy, sim::InitMode::AllZero,
                                      rng::derive(config.seed, kSchedTag));
    std::vector<std::uint8_t> selected;

    FLRunHistory history;
    history.accuracy.reserve(static_cast<std::size_t>(config.rounds));
    history.loss.reserve(static_cast<std::size_t>(config.rounds));
    history.n_selected.reserve(static_cast<std::size_t>(config.rounds));

    EvalResult test_eval{0.0, 0.0};
    double train_loss = 0.0;
    bool have_eval = false;
    for (std::int64_t round = 0; round < config.rounds; ++round) {
        sim::step_round(states, sched_config, policy, rng::derive(config.seed, kSchedTag),
                        round, selected);
        std::vector<std::vector<double>> updates;
        for (std::size_t i = 0; i < selected.size(); ++i) {
            if (!selected[i]) continue;
            const std::uint64_t stream =
                rng::derive(config.seed, kLocalTag, static_cast<std::uint64_t>(round), i);
            updates.push_back(
                local_train(model, params, train, shards[i], config, round, stream));
        }
        const auto picked = static_cast<int>(updates.size());
        if (picked > 0) params = aggregate(updates);
        if (picked > 0 || !have_eval) {
            // An idle round keeps the model, so the previous numbers stand.
            test_eval = evaluate(model, params, test);
            train_loss = evaluate(model, params, train).loss;
            have_eval = true;
        }
        history.accuracy.push_back(test_eval.accuracy);
        history.loss.push_back(train_loss);
        history.n_selected.push_back(picked);
        if (!history.rounds_to_target.has_value() &&
            test_eval.accuracy >= config.target_accuracy) {
            history.rounds_to_target = round + 1;
        }
    }
    return history;
}

}  // namespace fedsched::fl
