#pragma once

#include <string_view>
#include <vector>

#include "fedsched/rational.hpp"

namespace fedsched::policy {

// A scheduling problem instance: each round exactly (in expectation) k of n
// clients participate, and a client's selection probability may depend on its
// age, i.e. the number of rounds since it last participated, capped at m.
struct PolicyConfig {
    PolicyConfig(int n, int k, int m);

    int n;  // total clients
    int k;  // expected participants per round
    int m;  // age cap: ages m and above share one selection probability

    // Target mean time between selections, n / k.
    double target_return_time() const { return static_cast<double>(n) / k; }
};

// Age-indexed selection probabilities p[0..m]. A selected client's age resets
// to 0; otherwise the age advances and saturates at m. p[m] > 0 keeps the
// return time finite.
class MarkovPolicy {
  public:
    explicit MarkovPolicy(std::vector<double> probs);

    int max_age() const { return static_cast<int>(probs_.size()) - 1; }
    double prob(int age) const;
    const std::vector<double>& probs() const { return probs_; }

  private:
    std::vector<double> probs_;
};

// Stationary distribution pi[0..m] of the age chain.
struct StationaryDistribution {
    std::vector<double> pi;
};

// Moments of X, the stationary time between consecutive selections of one
// client. expected_from[a] and second_moment_from[a] condition on current
// age a; the headline mean and variance are the age-0 (renewal) values.
struct ReturnTimeMoments {
    std::vector<double> expected_from;
    std::vector<double> second_moment_from;
    double mean;
    double variance;
};

// Exact pmf of X on {1..x_max} plus the analytically summed geometric tail.
// pmf[x] is P(X = x); index 0 is unused and holds 0.
struct ReturnTimePmf {
    std::vector<double> pmf;
    double tail_mass;  // P(X > x_max)
    double mean;       // includes the tail contribution in closed form
    double variance;
};

struct SelectionStats {
    double mean;
    double variance;
};

enum class OptimalRegime {
    SingleAgeLowBudget,   // m = 1, k <= n/2
    SingleAgeHighBudget,  // m = 1, k >= n/2
    BelowRatioFloor,      // m <= floor(n/k) - 1
    AtOrAboveRatioFloor,  // m >= floor(n/k)
};

std::string_view regime_name(OptimalRegime regime);

struct OptimalPolicyResult {
    MarkovPolicy policy;
    double min_variance;
    OptimalRegime regime;
};

struct GridSearchResult {
    MarkovPolicy policy;
    double variance;
};

// Mean and variance of X when every round samples k of n uniformly,
// i.e. X is geometric with success probability k/n.
SelectionStats random_selection_stats(const PolicyConfig& config);
Rational random_selection_variance_exact(int n, int k);

StationaryDistribution stationary_distribution(const MarkovPolicy& policy);

ReturnTimeMoments return_time_moments(const MarkovPolicy& policy);

// Requires x_max >= max_age + 1 so the tail beyond x_max is purely geometric.
ReturnTimePmf return_time_distribution(const MarkovPolicy& policy, int x_max);

// Variance-minimizing policy subject to E[X] = n/k, in closed form.
OptimalPolicyResult optimal_policy(const PolicyConfig& config);

// Closed-form minimum variance, exact. Used as the zero-tolerance oracle.
Rational optimal_variance_exact(int n, int k, int m);

// Independent numerical check of optimal_policy: progressive grid refinement
// over the survival-product parameterization of the constraint set.
// `resolution` is the number of grid steps per pass (>= 10); intended for
// m <= 12, where each pass stays comfortably under a second.
GridSearchResult grid_search_optimum(const PolicyConfig& config, int resolution = 200);

}  // namespace fedsched::policy
