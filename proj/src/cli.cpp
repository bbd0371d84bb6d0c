#include "dnsgd/cli.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "dnsgd/harness.hpp"

namespace dnsgd {

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    unsigned threads = 1;
};

RunConfig load_with_overrides(const std::string& path, const Globals& g) {
    RunConfig cfg = load_config(path);
    if (g.seed) cfg.master_seed = *g.seed;
    return cfg;
}

ExperimentOptions experiment_options(const Globals& g) {
    ExperimentOptions o;
    if (g.out_dir) o.out_dir = *g.out_dir;
    o.threads = g.threads;
    return o;
}

void print_vector(std::ostream& out, const Vector& v) {
    out << '(';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << format_double(v[i]);
    out << ')';
}

int report_smoothness(std::ostream& out, const std::string& label, const SmoothnessReport& r, double l0, double l1) {
    out << label << "  (l0=" << format_double(l0) << ", l1=" << format_double(l1) << ")\n";
    out << "  trials " << r.trials << ", violations " << r.violations << ", worst ratio "
        << format_double(r.worst_ratio) << '\n';
    if (!r.witness_x.empty()) {
        out << "  witness x=";
        print_vector(out, r.witness_x);
        out << " y=";
        print_vector(out, r.witness_y);
        out << "  gap " << format_double(r.witness_gap) << ", bound " << format_double(r.witness_bound) << '\n';
    }
    out << "  " << (r.passed ? "PASS" : "FAIL") << '\n';
    return r.passed ? 0 : 1;
}

int smoothness_demo(std::ostream& out, const std::string& which, double rate, std::size_t trials,
                    std::uint64_t seed) {
    const double l1 = rate / std::log(2.0);
    SmoothnessCheckOptions opts;
    opts.trials = trials;
    opts.seed = seed;
    opts.box = 5.0 / rate;
    opts.witnesses.push_back({Vector{0.0}, Vector{std::log(2.0) / rate}});
    int code = 0;
    auto check = [&](const SmoothFunction& f) {
        code = std::max(code, report_smoothness(out, f.name, check_relaxed_smooth(f, 0.0, l1, opts), 0.0, l1));
    };
    if (which == "f1" || which == "all") check(exp_single(rate, +1));
    if (which == "f2" || which == "all") check(exp_single(rate, -1));
    if (which == "average" || which == "all") check(exp_average(rate));
    return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Decentralized normalized SGD simulator"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Override master_seed of the config");
    app.add_option("--out-dir", g.out_dir, "Output directory (overrides the config's output)");
    app.add_option("--threads", g.threads, "Worker threads across seeds")->check(CLI::Range(1u, 1024u));

    std::string config;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment and write metrics CSVs and a summary");
    run_cmd->add_option("config", config, "Config file")->required();
    auto* sweep_cmd = app.add_subcommand("sweep", "Samples-per-agent sweep over agent counts");
    sweep_cmd->add_option("config", config, "Config file")->required();
    auto* topo_cmd = app.add_subcommand("validate-topology", "Build the mixing matrix and check its properties");
    topo_cmd->add_option("config", config, "Config file")->required();
    auto* params_cmd = app.add_subcommand("params", "Print theoretical hyperparameters and rho conditions");
    params_cmd->add_option("config", config, "Config file")->required();

    auto* smooth_cmd = app.add_subcommand(
        "check-smoothness", "Sample the relaxed smoothness inequality for a config's problem or the demo pair");
    std::string demo;
    double demo_rate = 1.0;
    std::size_t trials = 10000;
    smooth_cmd->add_option("config", config, "Config file");
    smooth_cmd->add_option("--demo", demo, "Two-exponential demo: f1, f2, average or all")
        ->check(CLI::IsMember({"f1", "f2", "average", "all"}));
    smooth_cmd->add_option("--L", demo_rate, "Rate of the demo exponentials")->check(CLI::PositiveNumber);
    smooth_cmd->add_option("--trials", trials, "Sampled pairs per function");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 2;
    }

    try {
        if (run_cmd->parsed()) {
            const RunConfig cfg = load_with_overrides(config, g);
            const ExperimentResult res = run_experiment(cfg, experiment_options(g));
            out << res.summary << "outputs in " << res.out_dir.string() << '\n';
            return res.exit_code;
        }
        if (sweep_cmd->parsed()) {
            const RunConfig cfg = load_with_overrides(config, g);
            if (!cfg.sweep) throw ConfigError(config, 0, "/sweep", "sweep requires a sweep section");
            const SweepResult res = sweep_speedup(cfg, experiment_options(g));
            out << res.csv << "outputs in " << res.out_dir.string() << '\n';
            return 0;
        }
        if (topo_cmd->parsed()) {
            const RunConfig cfg = load_with_overrides(config, g);
            const PreparedRun prep = prepare(cfg);
            const ValidationReport rep = validate_mixing(prep.w);
            out << "topology " << to_string(prep.graph.kind()) << ", m=" << prep.graph.size()
                << ", edges=" << prep.graph.edges().size() << '\n';
            out << "eigenvalues";
            for (double e : prep.w.eigenvalues()) out << ' ' << format_double(e);
            out << "\nlambda2 " << format_double(prep.w.lambda2()) << ", gamma " << format_double(prep.w.gamma())
                << '\n';
            out << rep.describe();
            out << (rep.all_passed() ? "PASS" : "FAIL") << '\n';
            return rep.all_passed() ? 0 : 1;
        }
        if (params_cmd->parsed()) {
            const RunConfig cfg = load_with_overrides(config, g);
            const PreparedRun prep = prepare(cfg);
            if (prep.theory) {
                out << prep.theory->describe();
            } else {
                out << "explicit hyperparameters: eta=" << format_double(prep.hp.eta) << " b=" << prep.hp.batch
                    << " T=" << prep.hp.iterations << " K=" << prep.hp.k_inner << " K_init=" << prep.hp.k_init
                    << '\n';
                out << "  rho        = " << format_double(prep.rho) << '\n';
                out << "  rho guard  = " << format_double(prep.guard.required) << "  ["
                    << (prep.guard.ok ? "ok" : "NOT MET") << "]\n";
            }
            return 0;
        }
        if (smooth_cmd->parsed()) {
            const std::uint64_t seed = g.seed.value_or(0);
            if (!demo.empty()) return smoothness_demo(out, demo, demo_rate, trials, seed);
            if (config.empty()) {
                err << "check-smoothness: give a config file or --demo\n";
                return 2;
            }
            const RunConfig cfg = load_with_overrides(config, g);
            const PreparedRun prep = prepare(cfg);
            const ProblemInstance& p = prep.problem;
            SmoothnessCheckOptions opts;
            opts.box = p.box();
            opts.trials = trials;
            opts.seed = seed;
            int code = 0;
            for (std::size_t i = 0; i < p.agents(); ++i) {
                opts.seed = seed + i;
                const SmoothnessReport r = check_relaxed_smooth(p.local_function(i), p.l0(), p.l1(), opts);
                code = std::max(code, report_smoothness(out, "f_" + std::to_string(i), r, p.l0(), p.l1()));
            }
            const double lf = lf_effective(p.l0(), p.l1(), p.zeta());
            const SmoothnessReport r = check_relaxed_smooth(p.global_function(), lf, p.l1(), opts);
            code = std::max(code, report_smoothness(out, "f", r, lf, p.l1()));
            return code;
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace dnsgd
