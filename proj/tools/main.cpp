#include <cstdio>
#include <exception>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "fedsched/errors.hpp"

namespace cli = fedsched::cli;

namespace {

// An unset option reads back best as an absent key, not as `key=""` (which
// would parse as a one-element list for vector options).
std::string drop_empty_keys(const std::string& ini) {
    std::istringstream in(ini);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;
        out << line << '\n';
    }
    return out.str();
}

// The stock INI reader skips lines it cannot make sense of; report them with
// their line number instead, then hand the stream to the stock parser.
struct LintedIni : CLI::ConfigBase {
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::ostringstream clean;
        std::string raw;
        int line_no = 0;
        while (std::getline(input, raw)) {
            ++line_no;
            const std::string line = CLI::detail::trim_copy(raw);
            const bool blank = line.empty();
            const bool comment = !blank && (line.front() == '#' || line.front() == ';');
            const bool section = !blank && line.front() == '[' && line.back() == ']';
            const bool keyval = line.find('=') != std::string::npos;
            if (!(blank || comment || section || keyval)) {
                throw CLI::ConfigError("config line " + std::to_string(line_no) +
                                       ": expected key=value or [section], got '" + line + "'");
            }
            clean << raw << '\n';
        }
        std::istringstream replay(clean.str());
        return CLI::ConfigBase::from_config(replay);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Age-aware client scheduling for federated learning"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "fedsched 0.1.0");
    app.fallthrough();  // subcommands inherit this, so root flags work after them
    app.set_config("--config", "",
                   "read options from an INI file; keys live in a section named "
                   "after the subcommand, flags override file values");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.config_formatter(std::make_shared<LintedIni>());

    cli::AnalyzeOptions analyze_opts;
    auto* analyze = app.add_subcommand(
        "analyze", "Print the age table and return-time moments of a policy");
    analyze->add_option("-n,--clients", analyze_opts.n, "total number of clients")->required();
    analyze->add_option("-k,--per-round", analyze_opts.k, "clients selected per round")
        ->required();
    analyze->add_option("-m,--age-cap", analyze_opts.m, "age at which probabilities saturate")
        ->required();
    analyze
        ->add_option("--probs", analyze_opts.probs,
                     "selection probabilities for ages 0..m (default: the optimal policy)")
        ->delimiter(',');
    analyze->add_option("--json", analyze_opts.json_path, "also write the table to this file");

    cli::OptimizeOptions optimize_opts;
    auto* optimize = app.add_subcommand(
        "optimize", "Compute the variance-minimizing policy for a configuration");
    optimize->add_option("-n,--clients", optimize_opts.n, "total number of clients")->required();
    optimize->add_option("-k,--per-round", optimize_opts.k, "clients selected per round")
        ->required();
    optimize->add_option("-m,--age-cap", optimize_opts.m, "age at which probabilities saturate")
        ->required();
    optimize->add_option("--out", optimize_opts.out, "output JSON path")->capture_default_str();
    optimize
        ->add_option("--resolution", optimize_opts.resolution,
                     "grid steps per refinement pass for --verify")
        ->capture_default_str();
    optimize->add_flag("--verify", optimize_opts.verify,
                       "cross-check the closed form against a grid search and the "
                       "return-time distribution");

    cli::SimulateOptions simulate_opts;
    auto* simulate =
        app.add_subcommand("simulate", "Monte Carlo comparison of selection policies");
    simulate->add_option("-n,--clients", simulate_opts.n, "total number of clients")->required();
    simulate->add_option("-k,--per-round", simulate_opts.k, "clients selected per round")
        ->required();
    simulate->add_option("-m,--age-cap", simulate_opts.m, "age at which probabilities saturate")
        ->required();
    simulate
        ->add_option("--policies", simulate_opts.policies,
                     "comma-separated subset of uniform,bernoulli,markov,oldest")
        ->delimiter(',')
        ->check(CLI::IsMember({"uniform", "bernoulli", "markov", "oldest"}))
        ->capture_default_str();
    simulate
        ->add_option("--markov-probs", simulate_opts.markov_probs,
                     "override the markov policy (default: the optimal policy)")
        ->delimiter(',');
    simulate->add_option("--rounds", simulate_opts.rounds, "total rounds including burn-in")
        ->capture_default_str();
    simulate
        ->add_option("--burn-in", simulate_opts.burn_in,
                     "rounds to discard (negative: 10 cycles through the population)")
        ->capture_default_str();
    simulate->add_option("--seed", simulate_opts.seed, "root seed")->capture_default_str();
    simulate->add_option("--init", simulate_opts.init, "initial ages: allzero or randomphase")
        ->check(CLI::IsMember({"allzero", "randomphase"}))
        ->capture_default_str();
    simulate->add_option("--out", simulate_opts.out, "output directory")
        ->required()
        ->configurable(false);

    cli::TrainOptions train_opts;
    auto* train =
        app.add_subcommand("train", "Federated training runs under different schedulers");
    train->add_option("--task", train_opts.task, "synthetic or mnist")
        ->check(CLI::IsMember({"synthetic", "mnist"}))
        ->capture_default_str();
    train->add_option("--model", train_opts.model, "logistic or mlp")
        ->check(CLI::IsMember({"logistic", "mlp"}))
        ->capture_default_str();
    train->add_option("--hidden", train_opts.hidden, "hidden units for the mlp")
        ->capture_default_str();
    train
        ->add_option("--policies", train_opts.policies,
                     "comma-separated subset of uniform,bernoulli,markov,oldest")
        ->delimiter(',')
        ->check(CLI::IsMember({"uniform", "bernoulli", "markov", "oldest"}))
        ->capture_default_str();
    train->add_option("--seeds", train_opts.seeds, "comma-separated run seeds")
        ->delimiter(',')
        ->capture_default_str();
    train
        ->add_option("--markov-probs", train_opts.markov_probs,
                     "override the markov policy (default: the optimal policy)")
        ->delimiter(',');
    train->add_option("--rounds", train_opts.rounds, "communication rounds")
        ->capture_default_str();
    train->add_option("--epochs", train_opts.epochs, "local epochs per selected client")
        ->capture_default_str();
    train->add_option("--batch", train_opts.batch, "local minibatch size")
        ->capture_default_str();
    train->add_option("--lr0", train_opts.lr0, "initial learning rate")->capture_default_str();
    train->add_option("--lr-decay", train_opts.lr_decay, "per-round learning-rate decay")
        ->capture_default_str();
    train->add_option("--target", train_opts.target, "test accuracy that stops the clock")
        ->capture_default_str();
    train->add_option("-n,--clients", train_opts.n, "total number of clients")
        ->capture_default_str();
    train->add_option("-k,--per-round", train_opts.k, "clients selected per round")
        ->capture_default_str();
    train->add_option("-m,--age-cap", train_opts.m, "age at which probabilities saturate")
        ->capture_default_str();
    train->add_option("--partition", train_opts.partition, "iid or dirichlet")
        ->check(CLI::IsMember({"iid", "dirichlet"}))
        ->capture_default_str();
    train->add_option("--alpha", train_opts.alpha, "Dirichlet concentration")
        ->capture_default_str();
    train->add_option("--dim", train_opts.dim, "synthetic feature dimension")
        ->capture_default_str();
    train->add_option("--classes", train_opts.classes, "synthetic class count")
        ->capture_default_str();
    train->add_option("--samples", train_opts.samples, "synthetic training samples")
        ->capture_default_str();
    train->add_option("--test-samples", train_opts.test_samples, "synthetic test samples")
        ->capture_default_str();
    train->add_option("--separation", train_opts.separation, "synthetic class separation")
        ->capture_default_str();
    train->add_option("--data-seed", train_opts.data_seed, "seed for data generation/partition")
        ->capture_default_str();
    train->add_option("--data-dir", train_opts.data_dir,
                      "mnist directory (default: $FEDSCHED_DATA_DIR)");
    train->add_option("--out", train_opts.out, "output directory")
        ->required()
        ->configurable(false);
    train->add_option("--jobs", train_opts.jobs, "worker threads over (policy, seed) runs")
        ->configurable(false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kOk : cli::kUsage;
    }

    try {
        // The section header makes the echoed file directly loadable again
        // via `--config`.
        if (*analyze) return cli::cmd_analyze(analyze_opts);
        if (*optimize) return cli::cmd_optimize(optimize_opts);
        if (*simulate) {
            return cli::cmd_simulate(
                simulate_opts,
                "[simulate]\n" + drop_empty_keys(simulate->config_to_str(true, false)));
        }
        if (*train) {
            return cli::cmd_train(
                train_opts, "[train]\n" + drop_empty_keys(train->config_to_str(true, false)));
        }
        std::fprintf(stderr, "error: no command given\n");
        return cli::kUsage;
    } catch (const cli::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return cli::kUsage;
    } catch (const fedsched::ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return cli::kValidation;
    } catch (const fedsched::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return cli::kIo;
    } catch (const fedsched::DivergenceError& e) {
        // e.round is the library's 0-based index; reports use 1-based rounds.
        std::fprintf(stderr, "divergence at round %lld: %s\n",
                     static_cast<long long>(e.round + 1), e.what());
        return cli::kDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return cli::kUnexpected;
    }
}
