#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fedsched/errors.hpp"
#include "fedsched/model.hpp"
#include "testutil.hpp"

using namespace fedsched;
using fl::Dataset;
using fl::ModelKind;
using fl::ModelSpec;

namespace {

Dataset random_dataset(std::mt19937_64& gen, int count, int dim, int classes) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.count = count;
    d.dim = dim;
    d.classes = classes;
    d.features.resize(static_cast<std::size_t>(count) * dim);
    for (auto& v : d.features) v = static_cast<float>(normal(gen));
    d.labels.resize(static_cast<std::size_t>(count));
    for (auto& l : d.labels) l = static_cast<std::int32_t>(gen() % classes);
    // Ensure every class appears so validate() passes and losses are generic.
    for (int c = 0; c < classes && c < count; ++c) d.labels[static_cast<std::size_t>(c)] = c;
    return d;
}

// Central finite differences on the mean batch loss; h = 1e-5.
std::vector<double> fd_gradient(const ModelSpec& spec, std::vector<double> params,
                                const Dataset& data, std::span<const std::int32_t> batch) {
    std::vector<double> grad(params.size());
    std::vector<double> scratch(params.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = fl::loss_and_grad(spec, params, data, batch, scratch);
        params[i] = keep - h;
        const double down = fl::loss_and_grad(spec, params, data, batch, scratch);
        params[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        norm += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

// Hidden-layer preactivations near zero make finite differences straddle the
// ReLU kink; regenerate until the margin is comfortable.
bool mlp_has_kink(const ModelSpec& spec, std::span<const double> params, const Dataset& data,
                  std::span<const std::int32_t> batch) {
    for (const auto sample : batch) {
        const auto x = data.row(sample);
        for (int u = 0; u < spec.hidden; ++u) {
            const double* row = params.data() + static_cast<std::size_t>(u) * spec.dim;
            double acc = params[static_cast<std::size_t>(spec.hidden) * spec.dim +
                                static_cast<std::size_t>(u)];
            for (int j = 0; j < spec.dim; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
            if (std::abs(acc) < 1e-3) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("parameter counts follow the layouts") {
    CHECK(ModelSpec{ModelKind::Logistic, 7, 3, 0}.param_count() == 7 * 3 + 3);
    CHECK(ModelSpec{ModelKind::Mlp, 7, 3, 5}.param_count() == 5 * 7 + 5 + 3 * 5 + 3);
    CHECK_THROWS_AS((ModelSpec{ModelKind::Logistic, 0, 3, 0}.validate()), ValidationError);
    CHECK_THROWS_AS((ModelSpec{ModelKind::Mlp, 4, 3, 0}.validate()), ValidationError);
}

TEST_CASE("initial parameters: logistic zero, mlp seeded gaussian") {
    const ModelSpec logistic{ModelKind::Logistic, 5, 3, 0};
    for (const double v : fl::init_params(logistic, 9)) CHECK(v == 0.0);

    const ModelSpec mlp{ModelKind::Mlp, 5, 3, 4};
    const auto a = fl::init_params(mlp, 9);
    const auto b = fl::init_params(mlp, 9);
    const auto c = fl::init_params(mlp, 10);
    CHECK(a == b);
    CHECK(a != c);
    // Biases stay zero in both layers.
    for (int u = 0; u < 4; ++u) CHECK(a[static_cast<std::size_t>(20 + u)] == 0.0);
    for (int y = 0; y < 3; ++y) CHECK(a[a.size() - 3 + static_cast<std::size_t>(y)] == 0.0);
}

TEST_CASE("zero logistic weights predict uniformly") {
    std::mt19937_64 gen(3);
    const auto data = random_dataset(gen, 120, 6, 4);
    const ModelSpec spec{ModelKind::Logistic, 6, 4, 0};
    const auto params = fl::init_params(spec, 0);
    const auto eval = fl::evaluate(spec, params, data);
    CHECK(eval.loss == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    // Ties resolve to class 0, so accuracy equals the share of class-0 labels.
    double class0 = 0.0;
    for (const auto l : data.labels) class0 += l == 0 ? 1.0 : 0.0;
    CHECK(eval.accuracy == doctest::Approx(class0 / 120.0).epsilon(1e-12));
}

TEST_CASE("a high-margin linear map classifies one-hot features perfectly") {
    const int classes = 5;
    Dataset d;
    d.count = classes;
    d.dim = classes;
    d.classes = classes;
    d.features.assign(static_cast<std::size_t>(classes) * classes, 0.0f);
    d.labels.resize(static_cast<std::size_t>(classes));
    for (int i = 0; i < classes; ++i) {
        d.features[static_cast<std::size_t>(i) * classes + i] = 1.0f;
        d.labels[static_cast<std::size_t>(i)] = i;
    }
    const ModelSpec spec{ModelKind::Logistic, classes, classes, 0};
    std::vector<double> params(static_cast<std::size_t>(spec.param_count()), 0.0);
    for (int c = 0; c < classes; ++c) params[static_cast<std::size_t>(c) * classes + c] = 20.0;
    const auto eval = fl::evaluate(spec, params, d);
    CHECK(eval.accuracy == doctest::Approx(1.0));
    CHECK(eval.loss < 1e-6);
}

TEST_CASE("gradient of the zero model on a balanced batch has zero bias rows") {
    const int classes = 3;
    std::mt19937_64 gen(5);
    auto data = random_dataset(gen, 99, 4, classes);
    for (std::int64_t i = 0; i < data.count; ++i) {
        data.labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(i % classes);
    }
    const ModelSpec spec{ModelKind::Logistic, 4, classes, 0};
    const auto params = fl::init_params(spec, 0);
    std::vector<double> grad(params.size());
    std::vector<std::int32_t> batch(static_cast<std::size_t>(data.count));
    std::iota(batch.begin(), batch.end(), 0);
    const double loss = fl::loss_and_grad(spec, params, data, batch, grad);
    CHECK(loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    for (int c = 0; c < classes; ++c) {
        CHECK(std::abs(grad[grad.size() - 3 + static_cast<std::size_t>(c)]) < 1e-12);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 gen(2026);
    std::normal_distribution<double> normal(0.0, 0.7);
    int done = 0;
    while (done < 12) {
        const bool mlp = done % 2 == 1;
        const int dim = 2 + static_cast<int>(gen() % 5);
        const int classes = 2 + static_cast<int>(gen() % 3);
        const int hidden = 2 + static_cast<int>(gen() % 5);
        const ModelSpec spec{mlp ? ModelKind::Mlp : ModelKind::Logistic, dim, classes,
                             mlp ? hidden : 0};
        const auto data = random_dataset(gen, 12, dim, classes);
        std::vector<double> params(static_cast<std::size_t>(spec.param_count()));
        for (auto& p : params) p = normal(gen);
        std::vector<std::int32_t> batch{0, 3, 5, 7, 9};
        if (mlp && mlp_has_kink(spec, params, data, batch)) continue;

        std::vector<double> grad(params.size());
        fl::loss_and_grad(spec, params, data, batch, grad);
        const auto fd = fd_gradient(spec, params, data, batch);
        CHECK(relative_error(grad, fd) < 1e-4);
        ++done;
    }
}

TEST_CASE("loss_and_grad validates shapes and indices") {
    std::mt19937_64 gen(8);
    const auto data = random_dataset(gen, 10, 3, 2);
    const ModelSpec spec{ModelKind::Logistic, 3, 2, 0};
    auto params = fl::init_params(spec, 0);
    std::vector<double> grad(params.size());
    std::vector<std::int32_t> batch{0, 1};

    const ModelSpec wrong_dim{ModelKind::Logistic, 4, 2, 0};
    std::vector<double> wrong_params(static_cast<std::size_t>(wrong_dim.param_count()));
    std::vector<double> wrong_grad(wrong_params.size());
    CHECK_THROWS_AS(fl::loss_and_grad(wrong_dim, wrong_params, data, batch, wrong_grad),
                    ValidationError);
    CHECK_THROWS_AS(fl::loss_and_grad(spec, params, data, {}, grad), ValidationError);
    std::vector<std::int32_t> oob{0, 10};
    CHECK_THROWS_AS(fl::loss_and_grad(spec, params, data, oob, grad), ValidationError);
    std::vector<double> short_grad(grad.size() - 1);
    CHECK_THROWS_AS(fl::loss_and_grad(spec, params, data, batch, short_grad), ValidationError);
}

TEST_CASE("subset evaluation matches whole-set evaluation") {
    std::mt19937_64 gen(12);
    const auto data = random_dataset(gen, 64, 5, 3);
    const ModelSpec spec{ModelKind::Mlp, 5, 3, 6};
    const auto params = fl::init_params(spec, 4);
    std::vector<std::int32_t> all(static_cast<std::size_t>(data.count));
    std::iota(all.begin(), all.end(), 0);
    const auto a = fl::evaluate(spec, params, data);
    const auto b = fl::evaluate_subset(spec, params, data, all);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
    CHECK_THROWS_AS(fl::evaluate_subset(spec, params, data, {}), ValidationError);
}
