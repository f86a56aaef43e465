#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsched/data.hpp"

namespace fedsched::fl {

enum class ModelKind { Logistic, Mlp };

// Parameter layout is a single flat vector:
//   Logistic: W[classes x dim] row major, then b[classes].
//   Mlp:      W1[hidden x dim], b1[hidden], W2[classes x hidden], b2[classes],
//             with a ReLU between the layers.
struct ModelSpec {
    ModelKind kind = ModelKind::Logistic;
    int dim = 0;
    int classes = 0;
    int hidden = 0;  // used by Mlp only

    std::int64_t param_count() const;
    void validate() const;
};

// Logistic starts at zero (uniform predictions, loss ln classes); the MLP
// draws scaled Gaussian weights.
std::vector<double> init_params(const ModelSpec& spec, std::uint64_t seed);

// Mean cross-entropy over `batch` (indices into data) and its gradient.
// `grad` must have param_count() entries; it is overwritten.
double loss_and_grad(const ModelSpec& spec, std::span<const double> params, const Dataset& data,
                     std::span<const std::int32_t> batch, std::span<double> grad);

struct EvalResult {
    double accuracy;
    double loss;
};

// Argmax prediction; ties resolve to the lowest class index.
EvalResult evaluate(const ModelSpec& spec, std::span<const double> params, const Dataset& data);
EvalResult evaluate_subset(const ModelSpec& spec, std::span<const double> params,
                           const Dataset& data, std::span<const std::int32_t> indices);

}  // namespace fedsched::fl
