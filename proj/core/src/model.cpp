#include "fedsched/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsched/errors.hpp"
#include "fedsched/rng.hpp"

namespace fedsched::fl {

void ModelSpec::validate() const {
    if (dim < 1) throw ValidationError("model: dim must be positive");
    if (classes < 2) throw ValidationError("model: needs at least two classes");
    if (kind == ModelKind::Mlp && hidden < 1) {
        throw ValidationError("model: mlp needs a positive hidden width");
    }
}

std::int64_t ModelSpec::param_count() const {
    const std::int64_t d = dim, c = classes, h = hidden;
    if (kind == ModelKind::Logistic) return c * d + c;
    return h * d + h + c * h + c;
}

std::vector<double> init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::vector<double> params(static_cast<std::size_t>(spec.param_count()), 0.0);
    if (spec.kind == ModelKind::Logistic) return params;

    rng::SplitMix64 engine(rng::derive(seed, rng::stream_tag("init")));
    const double s1 = std::sqrt(2.0 / spec.dim);
    const double s2 = std::sqrt(2.0 / spec.hidden);
    std::size_t at = 0;
    for (int i = 0; i < spec.hidden * spec.dim; ++i) params[at++] = s1 * engine.normal();
    at += static_cast<std::size_t>(spec.hidden);  // b1 stays zero
    for (int i = 0; i < spec.classes * spec.hidden; ++i) params[at++] = s2 * engine.normal();
    return params;
}

namespace {

// Stable log-sum-exp; also records the argmax with lowest-index ties.
double log_sum_exp(std::span<const double> logits, int* argmax) {
    double mx = logits[0];
    int best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
        if (logits[c] > mx) {
            mx = logits[c];
            best = static_cast<int>(c);
        }
    }
    double total = 0.0;
    for (const double l : logits) total += std::exp(l - mx);
    if (argmax != nullptr) *argmax = best;
    return mx + std::log(total);
}

struct MlpViews {
    const double* w1;
    const double* b1;
    const double* w2;
    const double* b2;
};

MlpViews mlp_views(const ModelSpec& spec, const double* p) {
    MlpViews v;
    v.w1 = p;
    v.b1 = p + static_cast<std::size_t>(spec.hidden) * spec.dim;
    v.w2 = v.b1 + spec.hidden;
    v.b2 = v.w2 + static_cast<std::size_t>(spec.classes) * spec.hidden;
    return v;
}

struct MlpMutViews {
    double* w1;
    double* b1;
    double* w2;
    double* b2;
};

MlpMutViews mlp_mut_views(const ModelSpec& spec, double* p) {
    MlpMutViews v;
    v.w1 = p;
    v.b1 = p + static_cast<std::size_t>(spec.hidden) * spec.dim;
    v.w2 = v.b1 + spec.hidden;
    v.b2 = v.w2 + static_cast<std::size_t>(spec.classes) * spec.hidden;
    return v;
}

void forward_logits(const ModelSpec& spec, const double* params, std::span<const float> x,
                    std::vector<double>& hidden_buf, std::vector<double>& logits) {
    logits.resize(static_cast<std::size_t>(spec.classes));
    if (spec.kind == ModelKind::Logistic) {
        const double* w = params;
        const double* b = params + static_cast<std::size_t>(spec.classes) * spec.dim;
        for (int c = 0; c < spec.classes; ++c) {
            const double* row = w + static_cast<std::size_t>(c) * spec.dim;
            double acc = b[c];
            for (int j = 0; j < spec.dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
            logits[static_cast<std::size_t>(c)] = acc;
        }
        return;
    }
    const auto v = mlp_views(spec, params);
    hidden_buf.resize(static_cast<std::size_t>(spec.hidden));
    for (int u = 0; u < spec.hidden; ++u) {
        const double* row = v.w1 + static_cast<std::size_t>(u) * spec.dim;
        double acc = v.b1[u];
        for (int j = 0; j < spec.dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
        hidden_buf[static_cast<std::size_t>(u)] = acc > 0.0 ? acc : 0.0;
    }
    for (int c = 0; c < spec.classes; ++c) {
        const double* row = v.w2 + static_cast<std::size_t>(c) * spec.hidden;
        double acc = v.b2[c];
        for (int u = 0; u < spec.hidden; ++u) acc += row[u] * hidden_buf[static_cast<std::size_t>(u)];
        logits[static_cast<std::size_t>(c)] = acc;
    }
}

}  // namespace

double loss_and_grad(const ModelSpec& spec, std::span<const double> params, const Dataset& data,
                     std::span<const std::int32_t> batch, std::span<double> grad) {
    spec.validate();
    if (spec.dim != data.dim || spec.classes < data.classes) {
        throw ValidationError("model: spec does not match dataset shape");
    }
    if (params.size() != static_cast<std::size_t>(spec.param_count()) ||
        grad.size() != params.size()) {
        throw ValidationError("model: parameter or gradient buffer size mismatch");
    }
    if (batch.empty()) throw ValidationError("model: empty batch");

    std::fill(grad.begin(), grad.end(), 0.0);
    std::vector<double> logits, hidden, err(static_cast<std::size_t>(spec.classes)),
        dhidden(static_cast<std::size_t>(std::max(spec.hidden, 1)));
    double loss = 0.0;

    for (const auto sample : batch) {
        if (sample < 0 || sample >= data.count) {
            throw ValidationError("model: batch index out of range");
        }
        const auto x = data.row(sample);
        const int y = data.labels[static_cast<std::size_t>(sample)];
        forward_logits(spec, params.data(), x, hidden, logits);
        const double lse = log_sum_exp(logits, nullptr);
        loss += lse - logits[static_cast<std::size_t>(y)];
        for (int c = 0; c < spec.classes; ++c) {
            err[static_cast<std::size_t>(c)] =
                std::exp(logits[static_cast<std::size_t>(c)] - lse) - (c == y ? 1.0 : 0.0);
        }

        if (spec.kind == ModelKind::Logistic) {
            double* gw = grad.data();
            double* gb = grad.data() + static_cast<std::size_t>(spec.classes) * spec.dim;
            for (int c = 0; c < spec.classes; ++c) {
                const double e = err[static_cast<std::size_t>(c)];
                double* row = gw + static_cast<std::size_t>(c) * spec.dim;
                for (int j = 0; j < spec.dim; ++j) row[j] += e * x[static_cast<std::size_t>(j)];
                gb[c] += e;
            }
            continue;
        }

        const auto v = mlp_views(spec, params.data());
        const auto g = mlp_mut_views(spec, grad.data());
        for (int u = 0; u < spec.hidden; ++u) dhidden[static_cast<std::size_t>(u)] = 0.0;
        for (int c = 0; c < spec.classes; ++c) {
            const double e = err[static_cast<std::size_t>(c)];
            const double* row = v.w2 + static_cast<std::size_t>(c) * spec.hidden;
            double* grow = g.w2 + static_cast<std::size_t>(c) * spec.hidden;
            for (int u = 0; u < spec.hidden; ++u) {
                grow[u] += e * hidden[static_cast<std::size_t>(u)];
                dhidden[static_cast<std::size_t>(u)] += e * row[u];
            }
            g.b2[c] += e;
        }
        for (int u = 0; u < spec.hidden; ++u) {
            if (hidden[static_cast<std::size_t>(u)] <= 0.0) continue;  // ReLU gate
            const double d = dhidden[static_cast<std::size_t>(u)];
            double* row = g.w1 + static_cast<std::size_t>(u) * spec.dim;
            for (int j = 0; j < spec.dim; ++j) row[j] += d * x[static_cast<std::size_t>(j)];
            g.b1[u] += d;
        }
    }

    const double scale = 1.0 / static_cast<double>(batch.size());
    for (auto& gv : grad) gv *= scale;
    return loss * scale;
}

EvalResult evaluate_subset(const ModelSpec& spec, std::span<const double> params,
                           const Dataset& data, std::span<const std::int32_t> indices) {
    spec.validate();
    if (spec.dim != data.dim || spec.classes < data.classes) {
        throw ValidationError("model: spec does not match dataset shape");
    }
    if (indices.empty()) throw ValidationError("model: nothing to evaluate");
    std::vector<double> logits, hidden;
    double loss = 0.0;
    std::int64_t correct = 0;
    for (const auto sample : indices) {
        if (sample < 0 || sample >= data.count) {
            throw ValidationError("model: evaluation index out of range");
        }
        const auto x = data.row(sample);
        const int y = data.labels[static_cast<std::size_t>(sample)];
        forward_logits(spec, params.data(), x, hidden, logits);
        int best = 0;
        const double lse = log_sum_exp(logits, &best);
        loss += lse - logits[static_cast<std::size_t>(y)];
        if (best == y) ++correct;
    }
    const double inv = 1.0 / static_cast<double>(indices.size());
    return {static_cast<double>(correct) * inv, loss * inv};
}

EvalResult evaluate(const ModelSpec& spec, std::span<const double> params, const Dataset& data) {
    std::vector<std::int32_t> all(static_cast<std::size_t>(data.count));
    std::iota(all.begin(), all.end(), 0);
    return evaluate_subset(spec, params, data, all);
}

}  // namespace fedsched::fl
