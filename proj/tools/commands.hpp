#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsched::cli {

// One exit code per failure class so scripts can tell them apart.
enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kUsage = 2,
    kValidation = 3,
    kIo = 4,
    kDivergence = 5,
};

// Command-level misuse that CLI11's parser cannot catch (e.g. an empty
// post-burn-in window). Maps to kUsage.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct AnalyzeOptions {
    int n = 0, k = 0, m = 0;
    std::vector<double> probs;  // empty: analyze the optimal policy
    std::string json_path;      // empty: stdout only
};

struct OptimizeOptions {
    int n = 0, k = 0, m = 0;
    std::string out = "optimal_policy.json";
    int resolution = 200;
    bool verify = false;
};

struct SimulateOptions {
    int n = 0, k = 0, m = 0;
    std::vector<std::string> policies{"uniform", "bernoulli", "markov", "oldest"};
    std::vector<double> markov_probs;  // empty: use the optimal policy
    std::int64_t rounds = 100000;
    std::int64_t burn_in = -1;  // negative: 10 * ceil(n / k)
    std::uint64_t seed = 0;
    std::string init = "randomphase";
    std::string out;
};

struct TrainOptions {
    std::string task = "synthetic";
    std::string model = "logistic";
    int hidden = 64;
    std::vector<std::string> policies{"uniform", "markov"};
    std::vector<std::uint64_t> seeds{0};
    std::vector<double> markov_probs;
    std::int64_t rounds = 200;
    int epochs = 5;
    int batch = 50;
    double lr0 = 0.1;
    double lr_decay = 0.998;
    double target = 0.9;
    int n = 100, k = 15, m = 10;
    std::string partition = "dirichlet";
    double alpha = 0.6;
    int dim = 20;
    int classes = 10;
    std::int64_t samples = 6000;
    std::int64_t test_samples = 2000;
    double separation = 2.0;
    std::uint64_t data_seed = 12345;
    std::string data_dir;  // mnist only; falls back to FEDSCHED_DATA_DIR
    std::string out;
    int jobs = 1;
};

int cmd_analyze(const AnalyzeOptions& options);
int cmd_optimize(const OptimizeOptions& options);
int cmd_simulate(const SimulateOptions& options, const std::string& effective_config);
int cmd_train(const TrainOptions& options, const std::string& effective_config);

}  // namespace fedsched::cli
