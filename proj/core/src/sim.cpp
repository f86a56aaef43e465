#include "fedsched/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsched/errors.hpp"
#include "fedsched/rng.hpp"

namespace fedsched::sim {

namespace {

constexpr std::uint64_t kSelectTag = rng::stream_tag("select");
constexpr std::uint64_t kPhaseTag = rng::stream_tag("phase");
constexpr std::uint64_t kPolicyTag = rng::stream_tag("policy");

struct OldestKey {
    std::int64_t age;
    std::uint64_t tiebreak;
    int index;
};

}  // namespace

SelectionPolicy SelectionPolicy::uniform_k() { return {PolicyKind::UniformK, std::nullopt}; }
SelectionPolicy SelectionPolicy::bernoulli_iid() {
    return {PolicyKind::BernoulliIID, std::nullopt};
}
SelectionPolicy SelectionPolicy::markov_policy(policy::MarkovPolicy policy) {
    return {PolicyKind::Markov, std::move(policy)};
}
SelectionPolicy SelectionPolicy::oldest_age_k() { return {PolicyKind::OldestAgeK, std::nullopt}; }

std::string_view SelectionPolicy::name() const {
    switch (kind) {
        case PolicyKind::UniformK: return "uniform";
        case PolicyKind::BernoulliIID: return "bernoulli";
        case PolicyKind::Markov: return "markov";
        case PolicyKind::OldestAgeK: return "oldest";
    }
    return "unknown";
}

std::int64_t default_burn_in(const policy::PolicyConfig& config) {
    return 10 * ((config.n + config.k - 1) / config.k);
}

namespace {

// Stationary age: P(A = a) = P(X > a) / E[X]. Walk the survival function,
// which past the cap decays geometrically.
std::int64_t sample_stationary_age(const policy::MarkovPolicy& markov, double u) {
    const auto moments = policy::return_time_moments(markov);
    const int m = markov.max_age();
    const double qm = 1.0 - markov.prob(m);
    double survival = 1.0;  // P(X > 0)
    double cdf = 0.0;
    std::int64_t age = 0;
    for (;;) {
        cdf += survival / moments.mean;
        if (u < cdf || survival <= 0.0 || age > (1 << 26)) return age;
        const double p = markov.prob(age < m ? static_cast<int>(age) : m);
        survival *= age < m ? (1.0 - p) : qm;
        ++age;
    }
}

std::int64_t sample_geometric_age(double rate, double u) {
    // P(A = a) = rate * (1 - rate)^a.
    if (rate >= 1.0) return 0;
    const double q = 1.0 - rate;
    double cdf = 0.0;
    double mass = rate;
    std::int64_t age = 0;
    for (;;) {
        cdf += mass;
        if (u < cdf || mass <= 0.0 || age > (1 << 26)) return age;
        mass *= q;
        ++age;
    }
}

}  // namespace

std::vector<ClientState> initial_states(const policy::PolicyConfig& config,
                                        const SelectionPolicy& policy, InitMode init,
                                        std::uint64_t seed) {
    std::vector<ClientState> states(static_cast<std::size_t>(config.n));
    if (init == InitMode::AllZero) return states;

    const std::uint64_t phase_seed = rng::derive(seed, kPhaseTag);
    if (policy.kind == PolicyKind::OldestAgeK) {
        // The oldest-first rotation settles into k clients per age level; a
        // random assignment of clients to levels is its stationary state.
        std::vector<int> order(static_cast<std::size_t>(config.n));
        std::iota(order.begin(), order.end(), 0);
        rng::SplitMix64 engine(phase_seed);
        engine.shuffle(order);
        for (int pos = 0; pos < config.n; ++pos) {
            const std::int64_t level = pos / config.k;
            auto& st = states[static_cast<std::size_t>(order[pos])];
            st.true_age = level;
            st.chain_age = std::min<std::int64_t>(level, config.m);
            st.gap_is_complete = false;
        }
        return states;
    }

    for (int i = 0; i < config.n; ++i) {
        const double u = rng::to_unit(rng::derive(phase_seed, static_cast<std::uint64_t>(i)));
        std::int64_t age = 0;
        if (policy.kind == PolicyKind::Markov) {
            age = sample_stationary_age(*policy.markov, u);
        } else {
            age = sample_geometric_age(static_cast<double>(config.k) / config.n, u);
        }
        auto& st = states[static_cast<std::size_t>(i)];
        st.true_age = age;
        st.chain_age = std::min<std::int64_t>(age, config.m);
        st.gap_is_complete = false;  // the gap in progress has no observed start
    }
    return states;
}

void step_round(std::vector<ClientState>& states, const policy::PolicyConfig& config,
                const SelectionPolicy& policy, std::uint64_t seed, std::int64_t round,
                std::vector<std::uint8_t>& selected) {
    const auto n = static_cast<std::size_t>(config.n);
    if (states.size() != n) throw ValidationError("step round: state count must equal n");
    selected.assign(n, 0);

    const std::uint64_t select_seed = rng::derive(seed, kSelectTag);
    switch (policy.kind) {
        case PolicyKind::Markov: {
            const auto& markov = *policy.markov;
            for (std::size_t i = 0; i < n; ++i) {
                const double p = markov.prob(static_cast<int>(states[i].chain_age));
                const double u = rng::to_unit(
                    rng::derive(select_seed, static_cast<std::uint64_t>(round), i));
                selected[i] = u < p ? 1 : 0;
            }
            break;
        }
        case PolicyKind::BernoulliIID: {
            const double p = static_cast<double>(config.k) / config.n;
            for (std::size_t i = 0; i < n; ++i) {
                const double u = rng::to_unit(
                    rng::derive(select_seed, static_cast<std::uint64_t>(round), i));
                selected[i] = u < p ? 1 : 0;
            }
            break;
        }
        case PolicyKind::UniformK: {
            rng::SplitMix64 engine(
                rng::derive(select_seed, static_cast<std::uint64_t>(round)));
            // Partial Fisher-Yates over client indices.
            std::vector<int> pool(n);
            std::iota(pool.begin(), pool.end(), 0);
            for (int j = 0; j < config.k; ++j) {
                const auto pick = j + static_cast<int>(engine.below(n - j));
                std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(pick)]);
                selected[static_cast<std::size_t>(pool[static_cast<std::size_t>(j)])] = 1;
            }
            break;
        }
        case PolicyKind::OldestAgeK: {
            std::vector<OldestKey> keys(n);
            for (std::size_t i = 0; i < n; ++i) {
                keys[i] = {states[i].true_age,
                           rng::derive(select_seed, static_cast<std::uint64_t>(round), i),
                           static_cast<int>(i)};
            }
            const auto older = [](const OldestKey& a, const OldestKey& b) {
                if (a.age != b.age) return a.age > b.age;
                if (a.tiebreak != b.tiebreak) return a.tiebreak > b.tiebreak;
                return a.index < b.index;
            };
            if (config.k < config.n) {
                std::nth_element(keys.begin(), keys.begin() + config.k, keys.end(), older);
            }
            for (int j = 0; j < config.k; ++j) {
                selected[static_cast<std::size_t>(keys[static_cast<std::size_t>(j)].index)] = 1;
            }
            break;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        auto& st = states[i];
        if (selected[i]) {
            st.chain_age = 0;
            st.true_age = 0;
            st.last_selected_round = round;
        } else {
            st.chain_age = std::min<std::int64_t>(st.chain_age + 1, config.m);
            st.true_age += 1;
        }
    }
}

SimMetrics run_simulation(const policy::PolicyConfig& config, const SelectionPolicy& policy,
                          std::int64_t rounds, std::int64_t burn_in, std::uint64_t seed,
                          InitMode init) {
    if (burn_in < 0) throw ValidationError("simulation: burn_in must be non-negative");
    if (rounds <= burn_in) throw ValidationError("simulation: rounds must exceed burn_in");
    if (policy.kind == PolicyKind::Markov && !policy.markov.has_value()) {
        throw ValidationError("simulation: markov policy kind needs probabilities");
    }

    auto states = initial_states(config, policy, init, seed);
    const auto n = static_cast<std::size_t>(config.n);
    std::vector<std::uint8_t> selected;
    std::vector<std::uint64_t> counts(n, 0);
    std::vector<std::uint64_t> histogram;

    double gap_sum = 0.0, gap_sq_sum = 0.0;
    std::uint64_t gap_count = 0;
    double count_sum = 0.0, count_sq_sum = 0.0;
    std::vector<std::int64_t> pre_ages(n);

    for (std::int64_t round = 0; round < rounds; ++round) {
        const bool recording = round >= burn_in;
        // Snapshot ages before the step resets them.
        std::uint64_t picked = 0;
        for (std::size_t i = 0; i < n; ++i) pre_ages[i] = states[i].true_age;

        step_round(states, config, policy, seed, round, selected);

        for (std::size_t i = 0; i < n; ++i) {
            if (!selected[i]) continue;
            ++picked;
            auto& st = states[i];
            if (recording) {
                counts[i] += 1;
                if (st.gap_is_complete) {
                    const std::int64_t gap = pre_ages[i] + 1;
                    gap_sum += static_cast<double>(gap);
                    gap_sq_sum += static_cast<double>(gap) * static_cast<double>(gap);
                    ++gap_count;
                    if (histogram.size() <= static_cast<std::size_t>(gap)) {
                        histogram.resize(static_cast<std::size_t>(gap) + 1, 0);
                    }
                    histogram[static_cast<std::size_t>(gap)] += 1;
                }
            }
            st.gap_is_complete = true;
        }
        if (recording) {
            count_sum += static_cast<double>(picked);
            count_sq_sum += static_cast<double>(picked) * static_cast<double>(picked);
        }
    }

    SimMetrics out;
    out.rounds_simulated = rounds;
    out.burn_in = burn_in;
    const double recorded = static_cast<double>(rounds - burn_in);
    out.per_client_selection_freq.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.per_client_selection_freq[i] = static_cast<double>(counts[i]) / recorded;
    }
    out.selected_count_mean = count_sum / recorded;
    out.selected_count_variance =
        count_sq_sum / recorded - out.selected_count_mean * out.selected_count_mean;
    out.peak_age_samples = gap_count;
    if (gap_count > 0) {
        out.peak_age_mean = gap_sum / static_cast<double>(gap_count);
        out.peak_age_variance = gap_sq_sum / static_cast<double>(gap_count) -
                                out.peak_age_mean * out.peak_age_mean;
    }
    for (std::size_t gap = 0; gap < histogram.size(); ++gap) {
        if (histogram[gap] > 0) {
            out.peak_age_histogram.emplace(static_cast<std::int64_t>(gap), histogram[gap]);
        }
    }
    return out;
}

std::vector<PolicyComparison> compare_policies(const policy::PolicyConfig& config,
                                               const std::vector<SelectionPolicy>& policies,
                                               std::int64_t rounds, std::int64_t burn_in,
                                               std::uint64_t seed, InitMode init) {
    std::vector<PolicyComparison> out;
    out.reserve(policies.size());
    for (std::size_t idx = 0; idx < policies.size(); ++idx) {
        const std::uint64_t policy_seed = rng::derive(seed, kPolicyTag, idx);
        out.push_back({std::string(policies[idx].name()),
                       run_simulation(config, policies[idx], rounds, burn_in, policy_seed, init)});
    }
    return out;
}

}  // namespace fedsched::sim
