#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedsched::fl {

// Dense feature matrix with integer class labels. Features are stored row
// major as float to keep MNIST-sized data compact; training math runs in
// double.
struct Dataset {
    std::int64_t count = 0;
    int dim = 0;
    int classes = 0;
    std::vector<float> features;  // count * dim
    std::vector<std::int32_t> labels;

    std::span<const float> row(std::int64_t i) const {
        return {features.data() + i * dim, static_cast<std::size_t>(dim)};
    }
    void validate() const;
};

struct SyntheticTask {
    Dataset train;
    Dataset test;
};

// Gaussian class clusters with unit-norm means scaled by `separation`.
// Labels are balanced across classes. test_count < 0 means count / 4.
SyntheticTask generate_synthetic(int dim, int classes, std::int64_t count, double separation,
                                 std::uint64_t seed, std::int64_t test_count = -1);

// IDX image/label pair (the MNIST container format). Pixels are scaled to
// [0, 1]. Bad magic numbers raise FormatError, image/label count mismatch
// raises ConsistencyError, unreadable or truncated files raise IoError.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

enum class PartitionKind { IID, Dirichlet };

struct PartitionSpec {
    PartitionKind kind = PartitionKind::IID;
    double alpha = 0.6;  // Dirichlet concentration; lower = more skew

    static PartitionSpec iid() { return {PartitionKind::IID, 0.0}; }
    static PartitionSpec dirichlet(double alpha) { return {PartitionKind::Dirichlet, alpha}; }
};

// Splits sample indices into n_clients disjoint shards covering the dataset,
// every shard within one sample of count / n_clients. IID shards are a random
// partition; Dirichlet shards draw per-client class mixtures and then repair
// sizes to stay balanced.
std::vector<std::vector<std::int32_t>> partition(const Dataset& data, const PartitionSpec& spec,
                                                 int n_clients, std::uint64_t seed);

}  // namespace fedsched::fl
