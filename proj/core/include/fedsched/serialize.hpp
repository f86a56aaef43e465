#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsched/fed.hpp"
#include "fedsched/policy.hpp"
#include "fedsched/sim.hpp"

namespace fedsched::io {

// Shortest text that round-trips the exact double, so identical runs emit
// byte-identical files.
std::string format_double(double value);

std::string metrics_json(const sim::SimMetrics& metrics);
std::string histogram_csv(const sim::SimMetrics& metrics);  // columns: x,count
std::string history_csv(const fl::FLRunHistory& history);   // round,accuracy,loss,n_selected

std::string policy_json(const policy::PolicyConfig& config,
                        const policy::OptimalPolicyResult& result);

struct RunSummary {
    std::string policy;
    std::uint64_t seed = 0;
    std::optional<std::int64_t> rounds_to_target;
    double final_accuracy = 0.0;
    double final_loss = 0.0;
};

// Per-policy mean rounds-to-target over the seeds that reached the target.
std::string train_summary_json(const std::vector<RunSummary>& runs);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace fedsched::io
