#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "fedsched/serialize.hpp"
#include "testutil.hpp"

// These tests drive the installed binary end to end. The test runner passes
// its location through FEDSCHED_CLI; the suite is registered as its own ctest
// entry so the pure-library suites stay runnable without a built CLI.

namespace {

namespace fs = std::filesystem;

std::string cli_path() {
    const char* path = std::getenv("FEDSCHED_CLI");
    REQUIRE_MESSAGE(path != nullptr, "FEDSCHED_CLI must point at the CLI binary");
    return path;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status >= 0);
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) { return fedsched::io::read_file(path.string()); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("analyze returns success for conforming policies") {
    CHECK(run("analyze -n 100 -k 15 -m 10") == 0);
    CHECK(run("analyze -n 10 -k 10 -m 1") == 0);
    CHECK(run("analyze -n 100 -k 15 -m 10 --probs 0,0,0,0,0,0.3333333333333333,1,1,1,1,1") == 0);
}

TEST_CASE("analyze rejects a policy that misses the mean return time") {
    CHECK(run("analyze -n 100 -k 15 -m 1 --probs 0,0.5") == 3);
    CHECK(run("analyze -n 100 -k 15 -m 10 --probs 0,0,0,0,0,1,1,1,1,1,1") == 3);
}

TEST_CASE("analyze rejects a probability list of the wrong length") {
    CHECK(run("analyze -n 100 -k 15 -m 10 --probs 0.5,1") == 3);
}

TEST_CASE("parameter domain failures exit with the validation code") {
    CHECK(run("analyze -n 10 -k 20 -m 3") == 3);  // budget above population
    CHECK(run("optimize -n 0 -k 1 -m 2") == 3);
}

TEST_CASE("malformed command lines exit with the usage code") {
    CHECK(run("analyze -n 100 -k 15") == 2);  // missing required -m
    CHECK(run("frobnicate") == 2);
    CHECK(run("simulate -n 10 -k 2 -m 3 --policies nosuch --out /tmp/unused") == 2);
    CHECK(run("") == 2);  // a subcommand is required
}

TEST_CASE("help exits cleanly") {
    CHECK(run("--help") == 0);
    CHECK(run("simulate --help") == 0);
}

TEST_CASE("optimize writes the expected policy file") {
    testutil::TempDir tmp("cli");
    const fs::path out = tmp.path() / "policy.json";
    REQUIRE(run("optimize -n 100 -k 15 -m 3 --out " + out.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    REQUIRE(j["probs"].size() == 4);
    CHECK(j["probs"][0].get<double>() == 0.0);
    CHECK(j["probs"][3].get<double>() == doctest::Approx(3.0 / 11.0).epsilon(1e-12));
    CHECK(j["n"] == 100);
    CHECK(j["min_variance"].get<double>() >= 0.0);
}

TEST_CASE("optimize --verify cross-checks and still succeeds") {
    testutil::TempDir tmp("cli");
    const fs::path out = tmp.path() / "policy.json";
    CHECK(run("optimize -n 8 -k 4 -m 1 --verify --out " + out.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(out));
    CHECK(j["min_variance"].get<double>() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("simulate writes one directory per policy plus the config echo") {
    testutil::TempDir tmp("cli");
    const fs::path out = tmp.path() / "sim";
    REQUIRE(run("simulate -n 20 -k 4 -m 5 --rounds 3000 --seed 3 --out " + out.string()) == 0);
    for (const char* name : {"uniform", "bernoulli", "markov", "oldest"}) {
        CHECK(fs::exists(out / name / "metrics.json"));
        CHECK(fs::exists(out / name / "peak_age_histogram.csv"));
    }
    const std::string config = slurp(out / "config.ini");
    CHECK(config.find("[simulate]") == 0);
    CHECK(config.find("seed=3") != std::string::npos);
    // The echo never names the output directory, so reruns into different
    // directories stay byte-comparable.
    CHECK(config.find("out=") == std::string::npos);
}

TEST_CASE("simulate with no post-burn-in rounds is a usage error") {
    CHECK(run("simulate -n 10 -k 2 -m 3 --rounds 50 --burn-in 50 --out /tmp/unused") == 2);
    CHECK(run("simulate -n 10 -k 2 -m 3 --rounds 10 --out /tmp/unused") == 2);  // default burn-in
}

TEST_CASE("simulate reruns are byte-identical") {
    testutil::TempDir tmp("cli");
    const fs::path a = tmp.path() / "a";
    const fs::path b = tmp.path() / "b";
    const std::string args = "simulate -n 20 -k 4 -m 5 --rounds 2000 --seed 11 --out ";
    REQUIRE(run(args + a.string()) == 0);
    REQUIRE(run(args + b.string()) == 0);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a);
        CAPTURE(rel.string());
        CHECK(slurp(entry.path()) == slurp(b / rel));
    }
}

TEST_CASE("simulate accepts its own config echo") {
    testutil::TempDir tmp("cli");
    const fs::path a = tmp.path() / "a";
    const fs::path b = tmp.path() / "b";
    REQUIRE(run("simulate -n 12 -k 3 -m 3 --rounds 1500 --seed 5 --out " + a.string()) == 0);
    REQUIRE(run("simulate --config " + (a / "config.ini").string() + " --out " + b.string()) ==
            0);
    CHECK(slurp(a / "markov" / "metrics.json") == slurp(b / "markov" / "metrics.json"));
}

TEST_CASE("config file failures are reported before any output appears") {
    testutil::TempDir tmp("cli");
    const fs::path out = tmp.path() / "never";
    SUBCASE("missing file") {
        CHECK(run("simulate --config " + (tmp.path() / "nope.ini").string() + " --out " +
                  out.string()) == 2);
    }
    SUBCASE("unparseable line") {
        std::ofstream(tmp.path() / "bad.ini") << "[simulate]\nclients=10\nnot a parseable line\n";
        CHECK(run("simulate --config " + (tmp.path() / "bad.ini").string() + " --out " +
                  out.string()) == 2);
    }
    SUBCASE("unknown key") {
        std::ofstream(tmp.path() / "bad.ini") << "[simulate]\nclientz=10\n";
        CHECK(run("simulate -n 10 -k 2 -m 3 --config " + (tmp.path() / "bad.ini").string() +
                  " --out " + out.string()) == 2);
    }
    CHECK_FALSE(fs::exists(out));
}

TEST_CASE("command line flags override config file values") {
    testutil::TempDir tmp("cli");
    std::ofstream(tmp.path() / "c.ini")
        << "[simulate]\nclients=12\nper-round=3\nage-cap=3\nrounds=1500\nseed=5\n";
    const fs::path a = tmp.path() / "a";
    const fs::path b = tmp.path() / "b";
    REQUIRE(run("simulate --config " + (tmp.path() / "c.ini").string() + " --seed 6 --out " +
                a.string()) == 0);
    REQUIRE(run("simulate -n 12 -k 3 -m 3 --rounds 1500 --seed 6 --out " + b.string()) == 0);
    CHECK(slurp(a / "uniform" / "metrics.json") == slurp(b / "uniform" / "metrics.json"));
}

TEST_CASE("train writes per-run CSVs and a summary") {
    testutil::TempDir tmp("cli");
    const fs::path out = tmp.path() / "train";
    REQUIRE(run("train --task synthetic --policies uniform,markov --seeds 1,2 --rounds 15 "
                "--samples 600 --test-samples 200 -n 10 -k 2 -m 4 --batch 20 --epochs 1 "
                "--dim 8 --classes 4 --out " +
                out.string()) == 0);
    CHECK(fs::exists(out / "uniform_seed1.csv"));
    CHECK(fs::exists(out / "uniform_seed2.csv"));
    CHECK(fs::exists(out / "markov_seed1.csv"));
    CHECK(fs::exists(out / "markov_seed2.csv"));
    const auto j = nlohmann::json::parse(slurp(out / "summary.json"));
    REQUIRE(j["policies"].size() == 2);
    CHECK(j["policies"][0]["name"] == "uniform");
    CHECK(j["policies"][0]["runs"].size() == 2);
    const std::string csv = slurp(out / "uniform_seed1.csv");
    CHECK(csv.find("round,accuracy,loss,n_selected") == 0);
}

TEST_CASE("train reruns are byte-identical and job-count independent") {
    testutil::TempDir tmp("cli");
    const fs::path a = tmp.path() / "a";
    const fs::path b = tmp.path() / "b";
    const std::string args =
        "train --task synthetic --policies uniform,markov --seeds 1,2 --rounds 10 "
        "--samples 400 --test-samples 100 -n 8 -k 2 -m 3 --batch 10 --epochs 1 "
        "--dim 6 --classes 3 --out ";
    REQUIRE(run(args + a.string() + " --jobs 1") == 0);
    REQUIRE(run(args + b.string() + " --jobs 4") == 0);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a);
        CAPTURE(rel.string());
        CHECK(slurp(entry.path()) == slurp(b / rel));
    }
}

TEST_CASE("train without reachable mnist files exits with the io code") {
    testutil::TempDir tmp("cli");
    const std::string cmd = "FEDSCHED_DATA_DIR=" + (tmp.path() / "empty").string() + " " +
                            cli_path() + " train --task mnist --out " +
                            (tmp.path() / "out").string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status >= 0);
    CHECK(WEXITSTATUS(status) == 4);
}

TEST_CASE("diverging training exits with the divergence code") {
    testutil::TempDir tmp("cli");
    CHECK(run("train --task synthetic --model mlp --hidden 8 --policies uniform --seeds 0 "
              "--rounds 10 --samples 200 --test-samples 50 -n 6 -k 2 -m 2 --batch 10 "
              "--epochs 1 --dim 6 --classes 3 --lr0 1e18 --out " +
              (tmp.path() / "out").string()) == 5);
}

}  // TEST_SUITE
