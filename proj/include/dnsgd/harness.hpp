#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dnsgd/analysis.hpp"
#include "dnsgd/optimizers.hpp"
#include "dnsgd/problems.hpp"
#include "dnsgd/topology.hpp"

namespace dnsgd {

/// Invalid configuration. `field` is a JSON pointer such as /problem/zeta and
/// `line` the 1-based source line it was found on (0 if unknown).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, std::size_t line, const std::string& field, const std::string& msg);
    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

struct TopologySpec {
    TopologyKind kind = TopologyKind::ring;
    std::optional<double> p;
    std::optional<std::uint64_t> seed;  ///< derived from master_seed when absent
};

struct AutoSpec {
    double epsilon = 0.0;
    std::optional<std::size_t> t_cap;
    double c_k = 2.0;
    double c_k_init = 1.0;
    KPolicy k_policy = KPolicy::guard;
};

struct SweepSpec {
    std::vector<std::size_t> m_list{2, 4, 8, 16};
    double target_epsilon = 0.0;
};

struct RunConfig {
    ProblemSpec problem;
    bool problem_seed_given = false;
    TopologySpec topology;
    Algorithm algorithm = Algorithm::dnsgd;
    std::optional<HyperParams> hyperparams;  ///< explicit values
    std::optional<AutoSpec> auto_params;     ///< "auto": computed from the theory
    std::uint64_t master_seed = 0;
    std::size_t num_seeds = 1;
    std::size_t snapshot_every = 10;
    std::string output = "out";
    DnasaSchedule dnasa_schedule = DnasaSchedule::decaying;
    std::optional<double> stop_at_grad_norm;
    std::optional<SweepSpec> sweep;
    /// Starting point; a single value is broadcast to every coordinate.
    Vector x0;

    /// Canonical JSON rendering of the resolved configuration.
    std::string to_json() const;
};

RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Child master seed of run k.
std::uint64_t seed_for_run(std::uint64_t master_seed, std::size_t k);

/// Problem, network and hyperparameters resolved from a config.
struct PreparedRun {
    ProblemInstance problem;
    Graph graph;
    MixingMatrix w;
    HyperParams hp;
    std::optional<TheoreticalParams> theory;
    RhoGuard guard;  ///< evaluated at hp for every run
    double rho = 0.0;
    Vector x0;
    double delta_f = 0.0;
};

PreparedRun prepare(const RunConfig& cfg);

struct CheckOutcome {
    std::string name;
    std::optional<std::size_t> seed_index;  ///< empty for aggregate checks
    bool applicable = true;
    bool passed = true;
    bool assertion = true;  ///< failing assertion-class checks give exit code 1
    double value = 0.0;
    double bound = 0.0;
    std::string note;
};

struct SeedRun {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    Trajectory traj;
};

struct ExperimentOptions {
    std::optional<std::filesystem::path> out_dir;  ///< overrides cfg.output
    bool write_files = true;
    unsigned threads = 1;
};

struct ExperimentResult {
    std::vector<SeedRun> runs;
    std::vector<CheckOutcome> checks;
    std::string summary;
    std::filesystem::path out_dir;
    int exit_code = 0;
};

ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& opts = {});

/// Header of every metrics CSV.
std::string metrics_header();
std::string metrics_csv(const Trajectory& traj, std::size_t seed_index, std::uint64_t seed);

struct SpeedupRow {
    std::size_t m = 0;
    std::size_t seeds = 0;
    std::size_t reached = 0;
    double mean_samples = 0.0;  ///< over seeds that reached the target
    double mean_comm = 0.0;
    double mean_iterations = 0.0;
    std::size_t batch = 0;
    int k_inner = 0;
    double rho = 0.0;
    std::size_t lemma2_violations = 0;
    double tracker_violation = 0.0;
};

struct SweepResult {
    std::vector<SpeedupRow> rows;
    std::string csv;
    std::filesystem::path out_dir;
};

/// For each m, samples per agent until |grad f(xbar^t)| <= target, averaged
/// over seeds. Rows that never reach the target are reported, not fatal.
SweepResult sweep_speedup(const RunConfig& cfg, const ExperimentOptions& opts = {});

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace dnsgd
