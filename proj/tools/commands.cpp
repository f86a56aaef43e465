#include "commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "fedsched/errors.hpp"
#include "fedsched/fed.hpp"
#include "fedsched/policy.hpp"
#include "fedsched/serialize.hpp"
#include "fedsched/sim.hpp"

namespace fedsched::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

policy::MarkovPolicy policy_for(const policy::PolicyConfig& config,
                                const std::vector<double>& override_probs) {
    if (override_probs.empty()) return policy::optimal_policy(config).policy;
    if (override_probs.size() != static_cast<std::size_t>(config.m) + 1) {
        throw ValidationError("markov probabilities must have m + 1 entries");
    }
    return policy::MarkovPolicy(override_probs);
}

sim::SelectionPolicy selection_for(const std::string& name,
                                   const policy::PolicyConfig& config,
                                   const std::vector<double>& markov_probs) {
    if (name == "uniform") return sim::SelectionPolicy::uniform_k();
    if (name == "bernoulli") return sim::SelectionPolicy::bernoulli_iid();
    if (name == "oldest") return sim::SelectionPolicy::oldest_age_k();
    if (name == "markov") {
        return sim::SelectionPolicy::markov_policy(policy_for(config, markov_probs));
    }
    throw UsageError("unknown policy '" + name + "'");
}

void require_unique(const std::vector<std::string>& names) {
    std::set<std::string> seen;
    for (const auto& name : names) {
        if (!seen.insert(name).second) throw UsageError("policy '" + name + "' listed twice");
    }
    if (names.empty()) throw UsageError("no policies listed");
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace

int cmd_analyze(const AnalyzeOptions& options) {
    const policy::PolicyConfig config(options.n, options.k, options.m);
    const char* source = "optimal";
    policy::MarkovPolicy markov = [&] {
        if (options.probs.empty()) return policy::optimal_policy(config).policy;
        source = "user";
        if (options.probs.size() != static_cast<std::size_t>(options.m) + 1) {
            throw ValidationError("expected " + std::to_string(options.m + 1) +
                                  " probabilities for ages 0.." + std::to_string(options.m) +
                                  ", got " + std::to_string(options.probs.size()));
        }
        return policy::MarkovPolicy(options.probs);
    }();

    const auto moments = policy::return_time_moments(markov);
    const double target = config.target_return_time();
    const double residual = moments.mean - target;
    if (std::abs(residual) > 1e-9 * std::max(1.0, target)) {
        throw ValidationError(
            "policy does not meet the mean return-time constraint: expected " +
            io::format_double(target) + " rounds, got " + io::format_double(moments.mean) +
            " (residual " + io::format_double(residual) + ")");
    }

    const auto dist = policy::stationary_distribution(markov);
    const auto baseline = policy::random_selection_stats(config);

    std::printf("clients n=%d, per-round budget k=%d, age cap m=%d (%s policy)\n", options.n,
                options.k, options.m, source);
    std::printf("%4s  %12s  %12s  %14s  %14s\n", "age", "p(select)", "pi", "E[X | age]",
                "E[X^2 | age]");
    for (int age = 0; age <= options.m; ++age) {
        std::printf("%4d  %12.8f  %12.8f  %14.8f  %14.8f\n", age, markov.prob(age),
                    dist.pi[static_cast<std::size_t>(age)],
                    moments.expected_from[static_cast<std::size_t>(age)],
                    moments.second_moment_from[static_cast<std::size_t>(age)]);
    }
    std::printf("return time: mean %.8f, variance %.8f\n", moments.mean, moments.variance);
    std::printf("uniform-random baseline: mean %.8f, variance %.8f\n", baseline.mean,
                baseline.variance);

    if (!options.json_path.empty()) {
        json j;
        j["n"] = options.n;
        j["k"] = options.k;
        j["m"] = options.m;
        j["source"] = source;
        j["probs"] = markov.probs();
        j["stationary"] = dist.pi;
        j["expected_from_age"] = moments.expected_from;
        j["second_moment_from_age"] = moments.second_moment_from;
        j["mean"] = moments.mean;
        j["variance"] = moments.variance;
        j["baseline_mean"] = baseline.mean;
        j["baseline_variance"] = baseline.variance;
        io::write_file(options.json_path, j.dump(2) + "\n");
        std::printf("wrote %s\n", options.json_path.c_str());
    }
    return kOk;
}

int cmd_optimize(const OptimizeOptions& options) {
    const policy::PolicyConfig config(options.n, options.k, options.m);
    const auto result = policy::optimal_policy(config);

    std::printf("optimal policy for n=%d, k=%d, m=%d (regime %s)\n", options.n, options.k,
                options.m, std::string(policy::regime_name(result.regime)).c_str());
    std::printf("probs:");
    for (const double p : result.policy.probs()) std::printf(" %s", io::format_double(p).c_str());
    std::printf("\nmin variance: %s\n", io::format_double(result.min_variance).c_str());

    if (options.verify) {
        // Two independent routes must agree: a numerical search over the
        // constraint set and the distribution-level moments.
        const auto grid = policy::grid_search_optimum(config, options.resolution);
        const auto pmf = policy::return_time_distribution(
            result.policy, std::max(config.m + 1, 4 * static_cast<int>(std::ceil(
                                                          config.target_return_time()))));
        const double grid_gap = grid.variance - result.min_variance;
        const double pmf_gap = std::abs(pmf.variance - result.min_variance);
        std::printf("verify: grid-search variance %s (gap %s)\n",
                    io::format_double(grid.variance).c_str(),
                    io::format_double(grid_gap).c_str());
        std::printf("verify: distribution variance %s (gap %s)\n",
                    io::format_double(pmf.variance).c_str(),
                    io::format_double(pmf_gap).c_str());
        const double tol = 1e-6 * std::max(1.0, result.min_variance);
        if (grid_gap < -tol || grid_gap > tol || pmf_gap > 1e-9) {
            throw ValidationError("verification failed: independent routes disagree");
        }
        std::printf("verify: ok\n");
    }

    io::write_file(options.out, io::policy_json(config, result));
    std::printf("wrote %s\n", options.out.c_str());
    return kOk;
}

int cmd_simulate(const SimulateOptions& options, const std::string& effective_config) {
    if (options.out.empty()) throw UsageError("--out directory is required");
    require_unique(options.policies);
    const policy::PolicyConfig config(options.n, options.k, options.m);
    const std::int64_t burn_in =
        options.burn_in < 0 ? sim::default_burn_in(config) : options.burn_in;
    if (options.rounds <= burn_in) {
        throw UsageError("rounds (" + std::to_string(options.rounds) +
                         ") must exceed burn-in (" + std::to_string(burn_in) +
                         ") so at least one round is recorded");
    }
    const sim::InitMode init = [&] {
        if (options.init == "allzero") return sim::InitMode::AllZero;
        if (options.init == "randomphase") return sim::InitMode::RandomPhase;
        throw UsageError("unknown init mode '" + options.init + "'");
    }();

    std::vector<sim::SelectionPolicy> policies;
    for (const auto& name : options.policies) {
        policies.push_back(selection_for(name, config, options.markov_probs));
    }

    ensure_dir(options.out);
    io::write_file((fs::path(options.out) / "config.ini").string(), effective_config);

    const auto results =
        sim::compare_policies(config, policies, options.rounds, burn_in, options.seed, init);

    std::printf("%-10s  %12s  %14s  %14s  %12s\n", "policy", "peak mean", "peak variance",
                "count mean", "samples");
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& name = options.policies[i];
        const auto& metrics = results[i].metrics;
        const fs::path dir = fs::path(options.out) / name;
        ensure_dir(dir.string());
        io::write_file((dir / "metrics.json").string(), io::metrics_json(metrics));
        io::write_file((dir / "peak_age_histogram.csv").string(),
                       io::histogram_csv(metrics));
        std::printf("%-10s  %12.6f  %14.6f  %14.6f  %12llu\n", name.c_str(),
                    metrics.peak_age_mean, metrics.peak_age_variance,
                    metrics.selected_count_mean,
                    static_cast<unsigned long long>(metrics.peak_age_samples));
    }
    std::printf("wrote %s\n", options.out.c_str());
    return kOk;
}

namespace {

struct PreparedTask {
    fl::Dataset train;
    fl::Dataset test;
    fl::ModelSpec model;
};

PreparedTask prepare_task(const TrainOptions& options) {
    PreparedTask task;
    if (options.task == "synthetic") {
        auto synth = fl::generate_synthetic(options.dim, options.classes, options.samples,
                                            options.separation, options.data_seed,
                                            options.test_samples);
        task.train = std::move(synth.train);
        task.test = std::move(synth.test);
    } else if (options.task == "mnist") {
        std::string dir = options.data_dir;
        if (dir.empty()) {
            const char* env = std::getenv("FEDSCHED_DATA_DIR");
            dir = env == nullptr ? "" : env;
        }
        const char* names[] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
        if (dir.empty() || !fs::exists(fs::path(dir) / names[0]) ||
            !fs::exists(fs::path(dir) / names[1]) || !fs::exists(fs::path(dir) / names[2]) ||
            !fs::exists(fs::path(dir) / names[3])) {
            throw IoError(
                "mnist files not found; point FEDSCHED_DATA_DIR (or --data-dir) at a "
                "directory containing train-images-idx3-ubyte, train-labels-idx1-ubyte, "
                "t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte");
        }
        task.train = fl::load_idx((fs::path(dir) / names[0]).string(),
                                  (fs::path(dir) / names[1]).string());
        task.test = fl::load_idx((fs::path(dir) / names[2]).string(),
                                 (fs::path(dir) / names[3]).string());
        if (task.train.classes < task.test.classes) task.train.classes = task.test.classes;
        if (task.test.classes < task.train.classes) task.test.classes = task.train.classes;
    } else {
        throw UsageError("unknown task '" + options.task + "'");
    }

    task.model.dim = task.train.dim;
    task.model.classes = task.train.classes;
    if (options.model == "logistic") {
        task.model.kind = fl::ModelKind::Logistic;
    } else if (options.model == "mlp") {
        task.model.kind = fl::ModelKind::Mlp;
        task.model.hidden = options.hidden;
    } else {
        throw UsageError("unknown model '" + options.model + "'");
    }
    return task;
}

}  // namespace

int cmd_train(const TrainOptions& options, const std::string& effective_config) {
    if (options.out.empty()) throw UsageError("--out directory is required");
    require_unique(options.policies);
    if (options.seeds.empty()) throw UsageError("no seeds listed");
    if (options.jobs < 1) throw UsageError("--jobs must be at least 1");

    const policy::PolicyConfig config(options.n, options.k, options.m);
    const fl::PartitionSpec partition = [&] {
        if (options.partition == "iid") return fl::PartitionSpec::iid();
        if (options.partition == "dirichlet") return fl::PartitionSpec::dirichlet(options.alpha);
        throw UsageError("unknown partition '" + options.partition + "'");
    }();

    const PreparedTask task = prepare_task(options);

    std::vector<sim::SelectionPolicy> policies;
    for (const auto& name : options.policies) {
        policies.push_back(selection_for(name, config, options.markov_probs));
    }

    fl::TrainConfig train_config;
    train_config.rounds = options.rounds;
    train_config.local_epochs = options.epochs;
    train_config.batch_size = options.batch;
    train_config.lr0 = options.lr0;
    train_config.lr_decay = options.lr_decay;
    train_config.target_accuracy = options.target;
    train_config.validate();

    ensure_dir(options.out);
    io::write_file((fs::path(options.out) / "config.ini").string(), effective_config);

    struct Job {
        std::size_t policy_index;
        std::size_t seed_index;
    };
    std::vector<Job> jobs;
    for (std::size_t p = 0; p < policies.size(); ++p) {
        for (std::size_t s = 0; s < options.seeds.size(); ++s) jobs.push_back({p, s});
    }

    std::vector<io::RunSummary> summaries(jobs.size());
    std::vector<std::string> csv_paths(jobs.size());
    std::vector<std::string> csv_bodies(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex failure_lock;
    std::exception_ptr failure;

    const auto worker = [&] {
        for (;;) {
            const std::size_t at = next.fetch_add(1);
            if (at >= jobs.size()) return;
            {
                std::lock_guard<std::mutex> hold(failure_lock);
                if (failure) return;
            }
            try {
                const auto& job = jobs[at];
                auto run_config = train_config;
                run_config.seed = options.seeds[job.seed_index];
                const auto history =
                    fl::run_federated(task.train, task.test, partition, config,
                                      policies[job.policy_index], task.model, run_config);
                io::RunSummary summary;
                summary.policy = options.policies[job.policy_index];
                summary.seed = options.seeds[job.seed_index];
                summary.rounds_to_target = history.rounds_to_target;
                summary.final_accuracy = history.accuracy.back();
                summary.final_loss = history.loss.back();
                summaries[at] = summary;
                csv_paths[at] = summary.policy + "_seed" + std::to_string(summary.seed) + ".csv";
                csv_bodies[at] = io::history_csv(history);
            } catch (...) {
                std::lock_guard<std::mutex> hold(failure_lock);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const auto thread_count =
        std::min<std::size_t>(static_cast<std::size_t>(options.jobs), jobs.size());
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t at = 0; at < jobs.size(); ++at) {
        io::write_file((fs::path(options.out) / csv_paths[at]).string(), csv_bodies[at]);
        const auto& s = summaries[at];
        if (s.rounds_to_target.has_value()) {
            std::printf("%-10s seed %-6llu reached %.0f%% at round %lld (final acc %.4f)\n",
                        s.policy.c_str(), static_cast<unsigned long long>(s.seed),
                        options.target * 100.0,
                        static_cast<long long>(*s.rounds_to_target), s.final_accuracy);
        } else {
            std::printf("%-10s seed %-6llu did not reach %.0f%% (final acc %.4f)\n",
                        s.policy.c_str(), static_cast<unsigned long long>(s.seed),
                        options.target * 100.0, s.final_accuracy);
        }
    }

    io::write_file((fs::path(options.out) / "summary.json").string(),
                   io::train_summary_json(summaries));
    std::printf("wrote %s\n", options.out.c_str());
    return kOk;
}

}  // namespace fedsched::cli
