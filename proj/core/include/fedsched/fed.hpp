#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fedsched/data.hpp"
#include "fedsched/model.hpp"
#include "fedsched/policy.hpp"
#include "fedsched/sim.hpp"

namespace fedsched::fl {

struct TrainConfig {
    std::int64_t rounds = 200;
    int local_epochs = 5;
    int batch_size = 50;
    double lr0 = 0.1;
    double lr_decay = 0.998;
    double target_accuracy = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
    // Round-indexed learning rate; advances every round whether or not
    // anyone participates.
    double learning_rate(std::int64_t round) const;
};

struct FLRunHistory {
    std::vector<double> accuracy;  // test accuracy after each round
    std::vector<double> loss;      // training-set cross-entropy after each round
    std::vector<int> n_selected;
    std::optional<std::int64_t> rounds_to_target;  // 1-based round index
};

// Local minibatch SGD from `start` on one shard; returns the updated
// parameters. Batch order reshuffles every epoch, deterministically in
// (seed, round, client).
std::vector<double> local_train(const ModelSpec& spec, std::span<const double> start,
                                const Dataset& data, std::span<const std::int32_t> shard,
                                const TrainConfig& config, std::int64_t round,
                                std::uint64_t client_stream);

// Unweighted mean over the participants of a round.
std::vector<double> aggregate(const std::vector<std::vector<double>>& updates);

// Full run: partition, schedule with `policy`, train, evaluate every round.
// Rounds with no participants leave the model unchanged but still advance
// the learning-rate schedule.
FLRunHistory run_federated(const Dataset& train, const Dataset& test,
                           const PartitionSpec& partition_spec,
                           const policy::PolicyConfig& sched_config,
                           const sim::SelectionPolicy& policy, const ModelSpec& model,
                           const TrainConfig& config);

}  // namespace fedsched::fl
