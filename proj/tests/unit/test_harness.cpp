#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dnsgd/harness.hpp"

using namespace dnsgd;

namespace {

const char* kSmall = R"({
  "problem": {"family": "exp_pair", "d": 3, "m": 4, "L": 1.0, "zeta": 0.2, "sigma": 0.1},
  "topology": {"kind": "ring"},
  "algorithm": "dnsgd",
  "hyperparams": {"eta": 0.05, "batch": 4, "iterations": 30, "k_inner": 5, "k_init": 5, "epsilon": 0.3},
  "master_seed": 5,
  "num_seeds": 3,
  "x0": 1.5
})";

std::string read(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("dnsgd_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

ConfigError config_error(const std::string& text) {
    try {
        parse_config(text, "test.json");
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a config error");
    return ConfigError("", 0, "", "");
}

}  // namespace

TEST_SUITE("harness") {
    TEST_CASE("parsing a valid config") {
        const RunConfig c = parse_config(kSmall);
        CHECK(c.problem.family == ProblemFamily::exp_pair);
        CHECK(c.problem.d == 3);
        CHECK(c.problem.m == 4);
        CHECK(c.problem.sigma == 0.1);
        CHECK(c.topology.kind == TopologyKind::ring);
        REQUIRE(c.hyperparams);
        CHECK(c.hyperparams->batch == 4);
        CHECK(c.num_seeds == 3);
        CHECK(c.x0 == Vector(3, 1.5));
        CHECK_FALSE(c.auto_params);
        CHECK(parse_config(c.to_json()).to_json() == c.to_json());
    }

    TEST_CASE("shipped configs parse") {
        for (const char* name : {"exp_stationarity.json", "quadratic_descent.json", "speedup.json",
                                 "dsgd_quadratic.json", "golden.json"}) {
            CHECK_NOTHROW(load_config(std::filesystem::path(DNSGD_CONFIG_DIR) / name));
        }
        const RunConfig s = load_config(std::filesystem::path(DNSGD_CONFIG_DIR) / "speedup.json");
        REQUIRE(s.sweep);
        CHECK(s.sweep->m_list == std::vector<std::size_t>{2, 4, 8, 16});
    }

    TEST_CASE("config diagnostics name the field and line") {
        const ConfigError unknown = config_error(R"({
  "problem": {"family": "quadratic", "d": 2, "m": 2},
  "topology": {"kind": "ring", "colour": 1},
  "hyperparams": {"eta": 0.1, "iterations": 5}
})");
        CHECK(unknown.field() == "/topology/colour");
        CHECK(unknown.line() == 3);

        const ConfigError no_eps = config_error(R"({
  "problem": {"family": "quadratic", "d": 2, "m": 2},
  "topology": {"kind": "ring"},
  "hyperparams": "auto",
  "auto": {"t_cap": 10}
})");
        CHECK(no_eps.field() == "/auto/epsilon");

        const ConfigError syntax = config_error("{\n  \"problem\": {\n    \"d\": 2,,\n  }\n}");
        CHECK(syntax.line() == 3);

        const ConfigError seeds = config_error(R"({
  "problem": {"family": "quadratic", "d": 2, "m": 2},
  "topology": {"kind": "ring"},
  "hyperparams": {"eta": 0.1, "iterations": 5},
  "num_seeds": 0
})");
        CHECK(seeds.field() == "/num_seeds");
        CHECK(seeds.line() == 5);

        const ConfigError x0 = config_error(R"({
  "problem": {"family": "quadratic", "d": 2, "m": 2},
  "topology": {"kind": "ring"},
  "hyperparams": {"eta": 0.1, "iterations": 5},
  "x0": [1, 2, 3]
})");
        CHECK(x0.field() == "/x0");

        const ConfigError fam = config_error(R"({
  "problem": {"family": "cubic", "d": 2, "m": 2},
  "topology": {"kind": "ring"},
  "hyperparams": {"eta": 0.1, "iterations": 5}
})");
        CHECK(fam.field() == "/problem/family");
        CHECK(fam.line() == 2);

        const ConfigError p = config_error(R"({
  "problem": {"family": "quadratic", "d": 2, "m": 2},
  "topology": {"kind": "erdos_renyi"},
  "hyperparams": {"eta": 0.1, "iterations": 5}
})");
        CHECK(p.field() == "/topology/p");
    }

    TEST_CASE("metrics header is pinned") {
        std::string golden = read(std::filesystem::path(DNSGD_GOLDEN_DIR) / "metrics_header.csv");
        while (!golden.empty() && (golden.back() == '\n' || golden.back() == '\r')) golden.pop_back();
        CHECK(metrics_header() == golden);
    }

    TEST_CASE("zero iterations write a single initial row") {
        RunConfig c = parse_config(kSmall);
        c.hyperparams->iterations = 0;
        c.num_seeds = 1;
        ExperimentOptions o;
        o.out_dir = scratch("t0");
        const ExperimentResult r = run_experiment(c, o);
        const std::string csv = read(*o.out_dir / "metrics_seed0.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
        CHECK(csv.rfind(metrics_header() + "\n", 0) == 0);
        CHECK(std::filesystem::exists(*o.out_dir / "summary.txt"));
        CHECK(std::filesystem::exists(*o.out_dir / "verification.csv"));
        CHECK(std::filesystem::exists(*o.out_dir / "config.json"));
        CHECK(r.exit_code == 0);
    }

    TEST_CASE("reruns and thread counts give identical bytes") {
        const RunConfig c = parse_config(kSmall);
        ExperimentOptions a;
        a.out_dir = scratch("det_a");
        ExperimentOptions b;
        b.out_dir = scratch("det_b");
        b.threads = 4;
        run_experiment(c, a);
        run_experiment(c, b);
        for (const char* f : {"metrics_seed0.csv", "metrics_seed1.csv", "metrics_seed2.csv", "summary.txt",
                              "verification.csv", "config.json"})
            CHECK_MESSAGE(read(*a.out_dir / f) == read(*b.out_dir / f), f);
        CHECK(read(*a.out_dir / "metrics_seed0.csv") != read(*a.out_dir / "metrics_seed1.csv"));
    }

    TEST_CASE("seed fan-out") {
        CHECK(seed_for_run(1, 0) != seed_for_run(1, 1));
        CHECK(seed_for_run(1, 0) != seed_for_run(2, 0));
        CHECK(seed_for_run(1, 3) == seed_for_run(1, 3));
    }

    TEST_CASE("auto hyperparameters are echoed in the summary") {
        RunConfig c = load_config(std::filesystem::path(DNSGD_CONFIG_DIR) / "quadratic_descent.json");
        ExperimentOptions o;
        o.write_files = false;
        const ExperimentResult r = run_experiment(c, o);
        CHECK(r.exit_code == 0);
        for (const char* key : {"M0, M1", "M2, M3", "rho guard", "eta", "K_init", "Delta_f"})
            CHECK_MESSAGE(r.summary.find(key) != std::string::npos, key);
        bool saw_descent = false;
        for (const CheckOutcome& ch : r.checks)
            if (ch.name == "descent_per_step") {
                saw_descent = true;
                CHECK(ch.passed);
                CHECK(ch.assertion);
            }
        CHECK(saw_descent);
    }

    TEST_CASE("sweep rows for duplicate agent counts agree") {
        RunConfig c = parse_config(kSmall);
        c.sweep = SweepSpec{{1, 1, 2}, 0.5};
        c.hyperparams->iterations = 200;
        ExperimentOptions o;
        o.write_files = false;
        const SweepResult r = sweep_speedup(c, o);
        REQUIRE(r.rows.size() == 3);
        CHECK(r.rows[0].mean_samples == r.rows[1].mean_samples);
        CHECK(r.rows[0].reached == r.rows[0].seeds);
        CHECK(r.csv.rfind("m,seeds,reached,status", 0) == 0);

        c.sweep->target_epsilon = 1e-9;
        c.hyperparams->iterations = 5;
        const SweepResult never = sweep_speedup(c, o);
        CHECK(never.rows[0].reached == 0);
        CHECK(never.csv.find("target not reached") != std::string::npos);
    }

    TEST_CASE("number formatting round-trips") {
        for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5})
            CHECK(std::stod(format_double(v)) == v);
        CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    }
}
