#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fedsched/policy.hpp"

namespace fedsched::sim {

enum class PolicyKind { UniformK, BernoulliIID, Markov, OldestAgeK };

// A per-round selection rule over n clients. All four rules have the same
// per-client selection rate k/n; they differ in how ages are used.
struct SelectionPolicy {
    PolicyKind kind;
    std::optional<policy::MarkovPolicy> markov;  // engaged iff kind == Markov

    static SelectionPolicy uniform_k();
    static SelectionPolicy bernoulli_iid();
    static SelectionPolicy markov_policy(policy::MarkovPolicy policy);
    static SelectionPolicy oldest_age_k();

    std::string_view name() const;
};

enum class InitMode {
    AllZero,      // every client starts as if selected in round -1
    RandomPhase,  // ages drawn from each client's stationary age distribution
};

struct ClientState {
    std::int64_t chain_age = 0;  // age capped at m for Markov decisions
    std::int64_t true_age = 0;   // uncapped rounds since last selection
    std::int64_t last_selected_round = -1;
    bool gap_is_complete = true;  // false until the first post-init selection closes a gap
};

struct SimMetrics {
    double peak_age_mean = 0.0;
    double peak_age_variance = 0.0;
    std::vector<double> per_client_selection_freq;
    double selected_count_mean = 0.0;
    double selected_count_variance = 0.0;
    std::map<std::int64_t, std::uint64_t> peak_age_histogram;
    std::uint64_t peak_age_samples = 0;
    std::int64_t rounds_simulated = 0;
    std::int64_t burn_in = 0;
};

// 10 nominal cycles through the population.
std::int64_t default_burn_in(const policy::PolicyConfig& config);

std::vector<ClientState> initial_states(const policy::PolicyConfig& config,
                                        const SelectionPolicy& policy, InitMode init,
                                        std::uint64_t seed);

// Advances one round: fills `selected` with a 0/1 indicator per client, resets
// the age of selected clients and ages the rest. Selection decisions are pure
// functions of (seed, round, client), independent of call order.
void step_round(std::vector<ClientState>& states, const policy::PolicyConfig& config,
                const SelectionPolicy& policy, std::uint64_t seed, std::int64_t round,
                std::vector<std::uint8_t>& selected);

SimMetrics run_simulation(const policy::PolicyConfig& config, const SelectionPolicy& policy,
                          std::int64_t rounds, std::int64_t burn_in, std::uint64_t seed,
                          InitMode init);

struct PolicyComparison {
    std::string name;
    SimMetrics metrics;
};

// Runs each policy on its own derived seed stream with shared settings.
std::vector<PolicyComparison> compare_policies(const policy::PolicyConfig& config,
                                               const std::vector<SelectionPolicy>& policies,
                                               std::int64_t rounds, std::int64_t burn_in,
                                               std::uint64_t seed, InitMode init);

}  // namespace fedsched::sim
