#include "fedsched/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "fedsched/errors.hpp"

namespace fedsched::policy {

namespace {

// Survival products s[i] = prod_{j<i} (1 - p[j]); s[0] = 1. s[i] is the
// probability a freshly selected client stays unselected for its next i rounds.
std::vector<double> survival_products(const MarkovPolicy& policy) {
    const int m = policy.max_age();
    std::vector<double> s(static_cast<std::size_t>(m) + 1);
    s[0] = 1.0;
    for (int i = 1; i <= m; ++i) s[i] = s[i - 1] * (1.0 - policy.prob(i - 1));
    return s;
}

}  // namespace

PolicyConfig::PolicyConfig(int n, int k, int m) : n(n), k(k), m(m) {
    if (n < 1) throw ValidationError("policy config: n must be at least 1");
    if (k < 1 || k > n) throw ValidationError("policy config: k must be in [1, n]");
    if (m < 1) throw ValidationError("policy config: m must be at least 1");
}

MarkovPolicy::MarkovPolicy(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) {
        throw ValidationError("markov policy: need probabilities for ages 0..m with m >= 1");
    }
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ValidationError("markov policy: probabilities must lie in [0, 1]");
        }
    }
    if (!(probs_.back() > 0.0)) {
        throw ValidationError("markov policy: probability at the age cap must be positive");
    }
}

double MarkovPolicy::prob(int age) const {
    if (age < 0) throw ValidationError("markov policy: age must be non-negative");
    const auto cap = static_cast<std::size_t>(probs_.size() - 1);
    const auto idx = std::min(static_cast<std::size_t>(age), cap);
    return probs_[idx];
}

std::string_view regime_name(OptimalRegime regime) {
    switch (regime) {
        case OptimalRegime::SingleAgeLowBudget: return "m1-low-budget";
        case OptimalRegime::SingleAgeHighBudget: return "m1-high-budget";
        case OptimalRegime::BelowRatioFloor: return "below-ratio-floor";
        case OptimalRegime::AtOrAboveRatioFloor: return "at-or-above-ratio-floor";
    }
    return "unknown";
}

SelectionStats random_selection_stats(const PolicyConfig& config) {
    const double p = static_cast<double>(config.k) / config.n;
    return {1.0 / p, (1.0 - p) / (p * p)};
}

Rational random_selection_variance_exact(int n, int k) {
    // Geometric(k/n): (1 - p) / p^2 with p = k/n.
    return Rational(static_cast<std::int64_t>(n) * (n - k),
                    static_cast<std::int64_t>(k) * k);
}

StationaryDistribution stationary_distribution(const MarkovPolicy& policy) {
    const int m = policy.max_age();
    const auto s = survival_products(policy);
    std::vector<double> pi(static_cast<std::size_t>(m) + 1);
    double norm = 0.0;
    for (int i = 0; i < m; ++i) {
        pi[i] = s[i];
        norm += s[i];
    }
    pi[m] = s[m] / policy.prob(m);
    norm += pi[m];
    for (auto& v : pi) v /= norm;
    return {std::move(pi)};
}

ReturnTimeMoments return_time_moments(const MarkovPolicy& policy) {
    const int m = policy.max_age();
    std::vector<double> e1(static_cast<std::size_t>(m) + 1);
    std::vector<double> e2(static_cast<std::size_t>(m) + 1);
    const double pm = policy.prob(m);
    e1[m] = 1.0 / pm;
    e2[m] = (2.0 - pm) / (pm * pm);
    for (int i = m - 1; i >= 0; --i) {
        const double q = 1.0 - policy.prob(i);
        e1[i] = 1.0 + q * e1[i + 1];
        e2[i] = 1.0 + q * (2.0 * e1[i + 1] + e2[i + 1]);
    }
    const double mean = e1[0];
    const double variance = e2[0] - mean * mean;
    return {std::move(e1), std::move(e2), mean, variance};
}

ReturnTimePmf return_time_distribution(const MarkovPolicy& policy, int x_max) {
    const int m = policy.max_age();
    if (x_max < m + 1) {
        throw ValidationError("return time pmf: x_max must be at least max_age + 1");
    }
    const auto s = survival_products(policy);
    const double pm = policy.prob(m);
    const double q = 1.0 - pm;

    std::vector<double> pmf(static_cast<std::size_t>(x_max) + 1, 0.0);
    for (int x = 1; x <= m; ++x) pmf[x] = policy.prob(x - 1) * s[x - 1];
    double geo = pm * s[m];  // P(X = m + 1)
    for (int x = m + 1; x <= x_max; ++x) {
        pmf[x] = geo;
        geo *= q;
    }

    double mean = 0.0;
    double second = 0.0;
    for (int x = 1; x <= x_max; ++x) {
        mean += static_cast<double>(x) * pmf[x];
        second += static_cast<double>(x) * x * pmf[x];
    }

    // Beyond x_max the conditional overshoot is geometric with rate pm, so the
    // tail contributes in closed form instead of by truncation.
    double tail = 0.0;
    if (q > 0.0) tail = s[m] * std::pow(q, static_cast<double>(x_max - m));
    if (tail > 0.0) {
        const double xm = static_cast<double>(x_max);
        mean += tail * (xm + 1.0 / pm);
        second += tail * (xm * xm + 2.0 * xm / pm + (2.0 - pm) / (pm * pm));
    }
    return {std::move(pmf), tail, mean, second - mean * mean};
}

OptimalPolicyResult optimal_policy(const PolicyConfig& config) {
    const double r = config.target_return_time();
    const int floor_r = config.n / config.k;
    std::vector<double> probs(static_cast<std::size_t>(config.m) + 1, 0.0);

    if (config.m <= floor_r - 1) {
        // Wait out the first m ages, then select at constant rate 1 / (r - m).
        probs[config.m] = 1.0 / (r - config.m);
        const double variance = (r - config.m) * (r - config.m - 1.0);
        const auto regime = config.m == 1 ? OptimalRegime::SingleAgeLowBudget
                                          : OptimalRegime::BelowRatioFloor;
        return {MarkovPolicy(std::move(probs)), variance, regime};
    }

    // The return time can be pinned to the two integers around r: select with
    // certainty from age floor(r), and with the balancing probability one
    // round earlier.
    const double c = r - floor_r;
    probs[floor_r - 1] = 1.0 - c;
    for (int i = floor_r; i <= config.m; ++i) probs[i] = 1.0;
    const double variance = c * (1.0 - c);
    const auto regime = config.m == 1 ? OptimalRegime::SingleAgeHighBudget
                                      : OptimalRegime::AtOrAboveRatioFloor;
    return {MarkovPolicy(std::move(probs)), variance, regime};
}

Rational optimal_variance_exact(int n, int k, int m) {
    PolicyConfig config(n, k, m);
    const Rational r(n, k);
    const std::int64_t floor_r = n / k;
    if (m <= floor_r - 1) {
        return (r - Rational(m)) * (r - Rational(m + 1));
    }
    const Rational c = r - Rational(floor_r);
    return c * (Rational(1) - c);
}

namespace {

// The grid search runs in the survival-product parameterization
//   y[t] = prod_{j<=t} (1 - p[j]),  1 >= y[0] >= ... >= y[m-1] >= 0,
// where the mean constraint is linear: 1 + sum_{t<=m-2} y[t] + y[m-1]/p[m] = r.
// With g = r - 1 - sum_{t<=m-2} y[t] fixed, the best tail sets y[m-1] = p*g and
// contributes g * (2m - 1 + 2/p), decreasing in p, so p* = min(1, y[m-2] / g).
// The second moment is linear in the remaining y[t] with weight 2t + 3, which
// makes an exact dynamic program over a shared integer grid possible.

constexpr std::int64_t kInfCost = std::numeric_limits<std::int64_t>::max() / 4;

struct DpStage {
    std::int64_t level_min = 0, level_max = -1;
    std::int64_t sum_min = 0, sum_max = -1;
    std::vector<std::int64_t> cost;
    std::vector<std::int32_t> parent;  // previous stage level offset, -1 if none

    std::int64_t levels() const { return level_max - level_min + 1; }
    std::int64_t sum_width() const { return sum_max - sum_min + 1; }
    std::size_t at(std::int64_t level, std::int64_t sum) const {
        return static_cast<std::size_t>((level - level_min) * sum_width() + (sum - sum_min));
    }
};

struct TailChoice {
    double p = 1.0;
    double y_last = 0.0;
    double cost = 0.0;
    bool feasible = false;
};

TailChoice tail_for(double slack, double y_prev_cap, int m) {
    // slack = r - 1 - sum of earlier y values; y_prev_cap bounds y[m-1].
    TailChoice out;
    const double tol = 1e-9;
    if (slack < -tol) return out;
    if (slack <= tol) {
        out.feasible = true;
        return out;  // y[m-1] = 0, p[m] = 1, no tail cost
    }
    if (y_prev_cap <= 0.0) return out;
    out.p = std::min(1.0, y_prev_cap / slack);
    out.y_last = out.p * slack;
    out.cost = slack * (2.0 * m - 1.0 + 2.0 / out.p);
    out.feasible = true;
    return out;
}

MarkovPolicy policy_from_survivals(const std::vector<double>& y, double p_last) {
    // y has one entry per age 0..m-1; p_last is the cap probability.
    const int m = static_cast<int>(y.size());
    std::vector<double> probs(static_cast<std::size_t>(m) + 1);
    double prev = 1.0;
    for (int i = 0; i < m; ++i) {
        const double yi = std::clamp(std::min(y[i], prev), 0.0, 1.0);
        probs[i] = prev > 0.0 ? std::clamp(1.0 - yi / prev, 0.0, 1.0) : 1.0;
        prev = yi;
    }
    probs[m] = std::clamp(p_last, 1e-15, 1.0);
    return MarkovPolicy(std::move(probs));
}

GridSearchResult grid_search_m1(const PolicyConfig& config, int resolution) {
    const double r = config.target_return_time();
    const double g = r - 1.0;
    if (g <= 1e-9) {
        MarkovPolicy all{std::vector<double>{1.0, 1.0}};
        return {all, return_time_moments(all).variance};
    }
    double lo = 0.0, hi = 1.0;
    double best_y = 1.0;
    double best_var = std::numeric_limits<double>::infinity();
    double step = (hi - lo) / resolution;
    for (int pass = 0; pass < 16 && step > 1e-13; ++pass) {
        step = (hi - lo) / resolution;
        for (int i = 0; i <= resolution; ++i) {
            const double y0 = lo + step * i;
            if (y0 <= 0.0 || y0 > g + 1e-12) continue;  // p1 must land in (0, 1]
            const double p1 = std::min(1.0, y0 / g);
            MarkovPolicy candidate{std::vector<double>{1.0 - y0, p1}};
            const double var = return_time_moments(candidate).variance;
            if (var < best_var) {
                best_var = var;
                best_y = y0;
            }
        }
        lo = std::max(0.0, best_y - 5.0 * step);
        hi = std::min(1.0, best_y + 5.0 * step);
    }
    MarkovPolicy best{std::vector<double>{1.0 - best_y, std::min(1.0, best_y / g)}};
    return {best, return_time_moments(best).variance};
}

}  // namespace

GridSearchResult grid_search_optimum(const PolicyConfig& config, int resolution) {
    if (resolution < 20 || resolution > 2000) {
        throw ValidationError("grid search: resolution must be in [20, 2000]");
    }
    const int m = config.m;
    if (m == 1) return grid_search_m1(config, resolution);

    const int coords = m - 1;  // y[0..m-2]; y[m-1] is closed-form
    const double table_bytes = 12.0 * coords * (resolution + 1.0) *
                               (static_cast<double>(coords) * resolution + 1.0);
    if (table_bytes > 256.0 * 1024 * 1024) {
        throw ValidationError("grid search: resolution too high for this age cap");
    }

    const double r = config.target_return_time();
    std::vector<double> box_lo(coords, 0.0), box_hi(coords, 1.0);
    std::vector<double> best_y(coords, 1.0);
    double best_p = 1.0, best_y_last = 0.0;
    double best_objective = std::numeric_limits<double>::infinity();
    bool found_any = false;

    double step = 1.0 / resolution;
    for (int pass = 0; pass < 16 && step > 1e-13; ++pass) {
        // Shared step so level comparisons across coordinates stay exact.
        double width = 0.0;
        for (int t = 0; t < coords; ++t) width = std::max(width, box_hi[t] - box_lo[t]);
        step = width / resolution;
        if (step <= 0.0) break;

        const double sum_cap_value = r - 1.0 + 1e-9;
        const std::int64_t sum_cap =
            sum_cap_value <= 0.0
                ? 0
                : static_cast<std::int64_t>(std::floor(sum_cap_value / step));

        std::vector<DpStage> stages(static_cast<std::size_t>(coords));
        for (int t = 0; t < coords; ++t) {
            auto& st = stages[t];
            st.level_min = std::max<std::int64_t>(
                0, static_cast<std::int64_t>(std::ceil(box_lo[t] / step - 1e-9)));
            st.level_max = static_cast<std::int64_t>(std::floor(box_hi[t] / step + 1e-9));
            if (st.level_max < st.level_min) st.level_max = st.level_min;
            if (t == 0) {
                st.sum_min = st.level_min;
                st.sum_max = std::min(st.level_max, sum_cap);
            } else {
                st.sum_min = stages[t - 1].sum_min + st.level_min;
                st.sum_max = std::min(stages[t - 1].sum_max + st.level_max, sum_cap);
            }
            if (st.sum_max < st.sum_min) st.sum_max = st.sum_min - 1;  // empty stage
            const auto cells = st.sum_max < st.sum_min
                                   ? std::size_t{0}
                                   : static_cast<std::size_t>(st.levels() * st.sum_width());
            st.cost.assign(cells, kInfCost);
            st.parent.assign(cells, -1);
        }

        // Stage 0 seeds; later stages take suffix minima over the previous
        // stage's levels so the monotonicity constraint is a range query.
        {
            auto& st = stages[0];
            for (std::int64_t a = st.level_min; a <= st.level_max; ++a) {
                if (a < st.sum_min || a > st.sum_max) continue;
                st.cost[st.at(a, a)] = 3 * a;
            }
        }
        std::vector<std::int64_t> suffix;
        for (int t = 1; t < coords; ++t) {
            const auto& prev = stages[t - 1];
            auto& st = stages[t];
            if (st.sum_max < st.sum_min || prev.sum_max < prev.sum_min) continue;
            const auto prev_levels = static_cast<std::size_t>(prev.levels());
            const auto prev_width = static_cast<std::size_t>(prev.sum_width());
            suffix.assign(prev_levels * prev_width, kInfCost);
            for (std::size_t li = prev_levels; li-- > 0;) {
                for (std::size_t si = 0; si < prev_width; ++si) {
                    std::int64_t v = prev.cost[li * prev_width + si];
                    if (li + 1 < prev_levels) {
                        v = std::min(v, suffix[(li + 1) * prev_width + si]);
                    }
                    suffix[li * prev_width + si] = v;
                }
            }
            const std::int64_t weight = 2 * t + 3;
            for (std::int64_t a = st.level_min; a <= st.level_max; ++a) {
                if (a > prev.level_max) continue;  // no previous level >= a
                const std::int64_t from = std::max(a, prev.level_min);
                const auto li = static_cast<std::size_t>(from - prev.level_min);
                for (std::int64_t sum = st.sum_min; sum <= st.sum_max; ++sum) {
                    const std::int64_t prev_sum = sum - a;
                    if (prev_sum < prev.sum_min || prev_sum > prev.sum_max) continue;
                    const auto si = static_cast<std::size_t>(prev_sum - prev.sum_min);
                    const std::int64_t base = suffix[li * prev_width + si];
                    if (base >= kInfCost) continue;
                    st.cost[st.at(a, sum)] = base + weight * a;
                    // Parent is recovered later by scanning; store the query floor.
                    st.parent[st.at(a, sum)] = static_cast<std::int32_t>(from - prev.level_min);
                }
            }
        }

        // Close each end state with the best tail and keep the pass winner.
        const auto& last = stages[coords - 1];
        bool pass_found = false;
        double pass_best = std::numeric_limits<double>::infinity();
        std::int64_t pass_level = -1, pass_sum = -1;
        TailChoice pass_tail;
        for (std::int64_t a = last.level_min;
             last.sum_max >= last.sum_min && a <= last.level_max; ++a) {
            for (std::int64_t sum = last.sum_min; sum <= last.sum_max; ++sum) {
                const std::int64_t c = last.cost[last.at(a, sum)];
                if (c >= kInfCost) continue;
                const double slack = r - 1.0 - step * static_cast<double>(sum);
                const TailChoice tail =
                    tail_for(slack, step * static_cast<double>(a), m);
                if (!tail.feasible) continue;
                const double objective = 1.0 + step * static_cast<double>(c) + tail.cost;
                if (objective < pass_best) {
                    pass_best = objective;
                    pass_level = a;
                    pass_sum = sum;
                    pass_tail = tail;
                    pass_found = true;
                }
            }
        }

        if (!pass_found) {
            if (!found_any) {
                throw ValidationError(
                    "grid search: no feasible grid point; increase the resolution");
            }
        } else if (pass_best <= best_objective + 1e-15) {
            // Reconstruct the winning chain of levels back to stage 0.
            std::vector<std::int64_t> levels(static_cast<std::size_t>(coords));
            std::int64_t a = pass_level, sum = pass_sum;
            for (int t = coords - 1; t >= 1; --t) {
                levels[t] = a;
                const auto& prev = stages[t - 1];
                const std::int64_t prev_sum = sum - a;
                const std::int64_t target = stages[t].cost[stages[t].at(a, sum)] -
                                            (2 * static_cast<std::int64_t>(t) + 3) * a;
                std::int64_t from =
                    prev.level_min + stages[t].parent[stages[t].at(a, sum)];
                std::int64_t chosen = -1;
                for (std::int64_t b = from; b <= prev.level_max; ++b) {
                    if (prev.cost[prev.at(b, prev_sum)] == target) {
                        chosen = b;
                        break;
                    }
                }
                if (chosen < 0) {
                    throw std::logic_error("grid search: inconsistent table");
                }
                a = chosen;
                sum = prev_sum;
            }
            levels[0] = a;
            if (pass_best < best_objective) {
                best_objective = pass_best;
                for (int t = 0; t < coords; ++t) {
                    best_y[t] = step * static_cast<double>(levels[t]);
                }
                best_p = pass_tail.p;
                best_y_last = pass_tail.y_last;
            }
            found_any = true;
        }

        for (int t = 0; t < coords; ++t) {
            box_lo[t] = std::max(0.0, best_y[t] - 5.0 * step);
            box_hi[t] = std::min(1.0, best_y[t] + 5.0 * step);
        }
    }

    std::vector<double> y(best_y.begin(), best_y.end());
    y.push_back(best_y_last);
    MarkovPolicy best = policy_from_survivals(y, best_p);
    return {best, return_time_moments(best).variance};
}

}  // namespace fedsched::policy
