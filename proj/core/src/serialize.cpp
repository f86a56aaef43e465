#include "fedsched/serialize.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedsched/errors.hpp"

namespace fedsched::io {

using nlohmann::json;

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

std::string metrics_json(const sim::SimMetrics& metrics) {
    json j;
    j["peak_age_mean"] = metrics.peak_age_mean;
    j["peak_age_variance"] = metrics.peak_age_variance;
    j["peak_age_samples"] = metrics.peak_age_samples;
    j["selected_count_mean"] = metrics.selected_count_mean;
    j["selected_count_variance"] = metrics.selected_count_variance;
    j["per_client_selection_freq"] = metrics.per_client_selection_freq;
    j["rounds_simulated"] = metrics.rounds_simulated;
    j["burn_in"] = metrics.burn_in;
    return j.dump(2) + "\n";
}

std::string histogram_csv(const sim::SimMetrics& metrics) {
    std::string out = "x,count\n";
    for (const auto& [gap, count] : metrics.peak_age_histogram) {
        out += std::to_string(gap);
        out += ',';
        out += std::to_string(count);
        out += '\n';
    }
    return out;
}

std::string history_csv(const fl::FLRunHistory& history) {
    std::string out = "round,accuracy,loss,n_selected\n";
    for (std::size_t i = 0; i < history.accuracy.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += format_double(history.accuracy[i]);
        out += ',';
        out += format_double(history.loss[i]);
        out += ',';
        out += std::to_string(history.n_selected[i]);
        out += '\n';
    }
    return out;
}

std::string policy_json(const policy::PolicyConfig& config,
                        const policy::OptimalPolicyResult& result) {
    json j;
    j["n"] = config.n;
    j["k"] = config.k;
    j["m"] = config.m;
    j["probs"] = result.policy.probs();
    j["min_variance"] = result.min_variance;
    j["regime"] = std::string(policy::regime_name(result.regime));
    j["expected_return_time"] = config.target_return_time();
    const auto baseline = policy::random_selection_stats(config);
    j["baseline_variance"] = baseline.variance;
    return j.dump(2) + "\n";
}

std::string train_summary_json(const std::vector<RunSummary>& runs) {
    std::map<std::string, std::vector<const RunSummary*>> by_policy;
    std::vector<std::string> order;
    for (const auto& run : runs) {
        auto [it, fresh] = by_policy.try_emplace(run.policy);
        if (fresh) order.push_back(run.policy);
        it->second.push_back(&run);
    }

    json policies = json::array();
    for (const auto& name : order) {
        json entry;
        entry["name"] = name;
        json seeds = json::array();
        double total = 0.0;
        std::int64_t reached = 0;
        for (const auto* run : by_policy[name]) {
            json row;
            row["seed"] = run->seed;
            if (run->rounds_to_target.has_value()) {
                row["rounds_to_target"] = *run->rounds_to_target;
                total += static_cast<double>(*run->rounds_to_target);
                ++reached;
            } else {
                row["rounds_to_target"] = nullptr;
            }
            row["final_accuracy"] = run->final_accuracy;
            row["final_loss"] = run->final_loss;
            seeds.push_back(std::move(row));
        }
        entry["runs"] = std::move(seeds);
        entry["reached_target"] = reached;
        if (reached > 0) {
            entry["mean_rounds_to_target"] = total / static_cast<double>(reached);
        } else {
            entry["mean_rounds_to_target"] = nullptr;
        }
        policies.push_back(std::move(entry));
    }
    json j;
    j["policies"] = std::move(policies);
    return j.dump(2) + "\n";
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

}  // namespace fedsched::io
