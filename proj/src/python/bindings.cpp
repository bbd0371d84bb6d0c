#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

#include "dnsgd/gossip.hpp"
#include "dnsgd/harness.hpp"

namespace py = pybind11;
using namespace dnsgd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

AgentMatrix to_agents(const Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array (agents x dim)");
    AgentMatrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

Array from_agents(const AgentMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

Vector to_vector(const Array& a) {
    if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
    return Vector(a.data(), a.data() + a.size());
}

Array from_vector(const Vector& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict check_dict(const CheckOutcome& c) {
    py::dict d;
    d["name"] = c.name;
    d["seed_index"] = c.seed_index;
    d["applicable"] = c.applicable;
    d["passed"] = c.passed;
    d["assertion"] = c.assertion;
    d["value"] = c.value;
    d["bound"] = c.bound;
    d["note"] = c.note;
    return d;
}

py::dict metrics_dict(const Trajectory& traj) {
    const std::size_t n = traj.rows.size();
    Array t(n), f(n), g(n), gmax(n), cx(n), cv(n), phi(n), samples(n), comm(n);
    for (std::size_t k = 0; k < n; ++k) {
        const MetricsRow& r = traj.rows[k];
        t.mutable_at(k) = static_cast<double>(r.t);
        f.mutable_at(k) = r.f_mean;
        g.mutable_at(k) = r.grad_norm_mean;
        gmax.mutable_at(k) = r.grad_norm_agent_max;
        cx.mutable_at(k) = r.cons_x;
        cv.mutable_at(k) = r.cons_v;
        phi.mutable_at(k) = r.phi;
        samples.mutable_at(k) = static_cast<double>(r.samples_per_agent);
        comm.mutable_at(k) = static_cast<double>(r.comm_rounds);
    }
    py::dict d;
    d["t"] = t;
    d["f_mean"] = f;
    d["grad_norm_mean"] = g;
    d["grad_norm_agent_max"] = gmax;
    d["cons_x"] = cx;
    d["cons_v"] = cv;
    d["phi"] = phi;
    d["samples_per_agent"] = samples;
    d["comm_rounds"] = comm;
    return d;
}

py::dict smoothness_dict(const SmoothnessReport& r) {
    py::dict d;
    d["passed"] = r.passed;
    d["trials"] = r.trials;
    d["violations"] = r.violations;
    d["worst_ratio"] = r.worst_ratio;
    d["witness_x"] = r.witness_x;
    d["witness_y"] = r.witness_y;
    d["witness_gap"] = r.witness_gap;
    d["witness_bound"] = r.witness_bound;
    return d;
}

RunConfig config_from(const std::string& text_or_path) {
    const std::filesystem::path p(text_or_path);
    if (text_or_path.find('{') == std::string::npos && std::filesystem::exists(p)) return load_config(p);
    return parse_config(text_or_path);
}

ExperimentOptions options(std::optional<std::string> out_dir, unsigned threads) {
    ExperimentOptions o;
    o.threads = threads;
    o.write_files = out_dir.has_value();
    if (out_dir) o.out_dir = *out_dir;
    return o;
}

}  // namespace

PYBIND11_MODULE(_dnsgd, mod) {
    mod.doc() = "Decentralized normalized SGD simulator";

    py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
    py::register_exception<NonFiniteState>(mod, "NonFiniteState", PyExc_ArithmeticError);

    py::class_<MixingMatrix>(mod, "MixingMatrix")
        .def_property_readonly("size", &MixingMatrix::size)
        .def_property_readonly("lambda2", &MixingMatrix::lambda2)
        .def_property_readonly("gamma", &MixingMatrix::gamma)
        .def_property_readonly("eigenvalues", [](const MixingMatrix& w) { return from_vector(w.eigenvalues()); })
        .def_property_readonly("edges", [](const MixingMatrix& w) { return w.graph().edges(); })
        .def_property_readonly("weights",
                               [](const MixingMatrix& w) {
                                   Array out({w.size(), w.size()});
                                   std::copy(w.weights().begin(), w.weights().end(), out.mutable_data());
                                   return out;
                               })
        .def("validate", [](const MixingMatrix& w) {
            const ValidationReport r = validate_mixing(w);
            py::dict d;
            d["symmetric"] = r.symmetric;
            d["nonnegative"] = r.nonnegative;
            d["sparsity_matches"] = r.sparsity_matches;
            d["doubly_stochastic"] = r.doubly_stochastic;
            d["eigen_range"] = r.eigen_range;
            d["null_space_one"] = r.null_space_one;
            d["all_passed"] = r.all_passed();
            return d;
        });

    mod.def(
        "mixing_matrix",
        [](const std::string& kind, std::size_t m, std::optional<double> p, std::uint64_t seed) {
            TopologyOptions o;
            o.p = p;
            o.seed = seed;
            return metropolis_mixing(build_topology(parse_topology_kind(kind), m, o));
        },
        py::arg("kind"), py::arg("m"), py::arg("p") = py::none(), py::arg("seed") = 0,
        "Lazy Metropolis mixing matrix on a ring, path, complete or erdos_renyi graph.");

    mod.def(
        "acc_gossip", [](const Array& y, const MixingMatrix& w, int rounds) {
            return from_agents(acc_gossip(to_agents(y), w, rounds));
        },
        py::arg("y"), py::arg("w"), py::arg("rounds"));
    mod.def("contraction_rho", &contraction_rho, py::arg("lambda2"), py::arg("rounds"));
    mod.def("chebyshev_momentum", &chebyshev_momentum, py::arg("lambda2"));

    py::class_<ProblemInstance>(mod, "Problem")
        .def_property_readonly("family", [](const ProblemInstance& p) { return to_string(p.family()); })
        .def_property_readonly("dim", &ProblemInstance::dim)
        .def_property_readonly("agents", &ProblemInstance::agents)
        .def_property_readonly("l0", &ProblemInstance::l0)
        .def_property_readonly("l1", &ProblemInstance::l1)
        .def_property_readonly("zeta", &ProblemInstance::zeta)
        .def_property_readonly("sigma", &ProblemInstance::sigma)
        .def_property_readonly("f_star", &ProblemInstance::f_star)
        .def_property_readonly("offsets", [](const ProblemInstance& p) { return from_agents(p.offsets()); })
        .def("value", [](const ProblemInstance& p, const Array& x) { return p.value(to_vector(x)); })
        .def("grad", [](const ProblemInstance& p, const Array& x) { return from_vector(p.grad(to_vector(x))); })
        .def("value_local",
             [](const ProblemInstance& p, std::size_t i, const Array& x) { return p.value_local(i, to_vector(x)); })
        .def("grad_local",
             [](const ProblemInstance& p, std::size_t i, const Array& x) {
                 return from_vector(p.grad_local(i, to_vector(x)));
             })
        .def(
            "sample_grad",
            [](const ProblemInstance& p, std::size_t i, const Array& x, std::size_t batch, std::uint64_t seed,
               std::uint64_t iteration) {
                Stream s = OracleStreams{seed}.stream(i, iteration);
                return from_vector(sample_grad(p, i, to_vector(x), batch, s).grad);
            },
            py::arg("agent"), py::arg("x"), py::arg("batch") = 1, py::arg("seed") = 0, py::arg("iteration") = 0)
        .def(
            "check_smoothness",
            [](const ProblemInstance& p, std::size_t trials, std::uint64_t seed) {
                SmoothnessCheckOptions o;
                o.box = p.box();
                o.trials = trials;
                o.seed = seed;
                return smoothness_dict(
                    check_relaxed_smooth(p.global_function(), lf_effective(p.l0(), p.l1(), p.zeta()), p.l1(), o));
            },
            py::arg("trials") = 1000, py::arg("seed") = 0);

    mod.def(
        "make_problem",
        [](const std::string& family, std::size_t d, std::size_t m, double zeta, double sigma, std::uint64_t seed,
           double rate, int power, double scale, double curvature) {
            ProblemSpec s;
            s.family = parse_problem_family(family);
            s.d = d;
            s.m = m;
            s.zeta = zeta;
            s.sigma = sigma;
            s.seed = seed;
            s.exp_rate = rate;
            s.power = power;
            s.poly_scale = scale;
            s.curvature = curvature;
            return make_problem(s);
        },
        py::arg("family"), py::arg("d"), py::arg("m"), py::arg("zeta") = 0.0, py::arg("sigma") = 0.0,
        py::arg("seed") = 0, py::arg("L") = 1.0, py::arg("power") = 4, py::arg("scale") = 1.0,
        py::arg("curvature") = 1.0);

    mod.def(
        "smoothness_demo",
        [](const std::string& which, double rate, std::size_t trials, std::uint64_t seed) {
            SmoothnessCheckOptions o;
            o.trials = trials;
            o.seed = seed;
            o.box = 5.0 / rate;
            o.witnesses.push_back({Vector{0.0}, Vector{std::log(2.0) / rate}});
            SmoothFunction f = which == "f1"   ? exp_single(rate, +1)
                               : which == "f2" ? exp_single(rate, -1)
                               : which == "average"
                                   ? exp_average(rate)
                                   : throw std::invalid_argument("which must be f1, f2 or average");
            return smoothness_dict(check_relaxed_smooth(f, 0.0, rate / std::log(2.0), o));
        },
        py::arg("which"), py::arg("L") = 1.0, py::arg("trials") = 10000, py::arg("seed") = 0,
        "Relaxed smoothness check of exp(Lx), exp(-Lx) or their average with (0, L/ln 2).");

    mod.def(
        "theoretical_params",
        [](double epsilon, double l0, double l1, double zeta, double sigma, std::size_t m, double gamma,
           double delta_f, std::optional<std::size_t> t_cap, const std::string& k_policy) {
            TheoryOptions o;
            o.t_cap = t_cap;
            o.k_policy = parse_k_policy(k_policy);
            const TheoreticalParams t = theorem1_params(epsilon, l0, l1, zeta, sigma, m, gamma, delta_f, o);
            py::dict d;
            d["eta"] = t.hp.eta;
            d["batch"] = t.hp.batch;
            d["iterations"] = t.hp.iterations;
            d["k_inner"] = t.hp.k_inner;
            d["k_init"] = t.hp.k_init;
            d["rho"] = t.rho;
            d["rho_required"] = t.rho_required;
            d["guard_ok"] = t.guard_ok;
            d["t_capped"] = t.t_capped;
            d["l_f"] = t.l_f;
            d["description"] = t.describe();
            return d;
        },
        py::arg("epsilon"), py::arg("l0"), py::arg("l1"), py::arg("zeta"), py::arg("sigma"), py::arg("m"),
        py::arg("gamma"), py::arg("delta_f"), py::arg("t_cap") = py::none(), py::arg("k_policy") = "guard");

    mod.def(
        "normalize_config", [](const std::string& text_or_path) { return config_from(text_or_path).to_json(); },
        py::arg("config"), "Parse a config (JSON text or file path) and return its resolved form.");

    mod.def(
        "run_experiment",
        [](const std::string& text_or_path, std::optional<std::string> out_dir, unsigned threads) {
            const RunConfig cfg = config_from(text_or_path);
            ExperimentResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(cfg, options(out_dir, threads));
            }
            py::list runs, checks;
            for (const SeedRun& s : r.runs) {
                py::dict d;
                d["index"] = s.index;
                d["seed"] = s.seed;
                d["metrics"] = metrics_dict(s.traj);
                d["csv"] = metrics_csv(s.traj, s.index, s.seed);
                d["tracker_violation"] = s.traj.checks.tracker_violation;
                d["box_exits"] = s.traj.checks.box_exits;
                runs.append(d);
            }
            for (const CheckOutcome& c : r.checks) checks.append(check_dict(c));
            py::dict out;
            out["runs"] = runs;
            out["checks"] = checks;
            out["summary"] = r.summary;
            out["exit_code"] = r.exit_code;
            return out;
        },
        py::arg("config"), py::arg("out_dir") = py::none(), py::arg("threads") = 1,
        "Run every seed of a config. Files are written only when out_dir is given.");

    mod.def(
        "sweep_speedup",
        [](const std::string& text_or_path, std::optional<std::string> out_dir, unsigned threads) {
            const RunConfig cfg = config_from(text_or_path);
            SweepResult r;
            {
                py::gil_scoped_release release;
                r = sweep_speedup(cfg, options(out_dir, threads));
            }
            py::list rows;
            for (const SpeedupRow& row : r.rows) {
                py::dict d;
                d["m"] = row.m;
                d["seeds"] = row.seeds;
                d["reached"] = row.reached;
                d["mean_samples"] = row.mean_samples;
                d["mean_comm"] = row.mean_comm;
                d["mean_iterations"] = row.mean_iterations;
                d["batch"] = row.batch;
                d["k_inner"] = row.k_inner;
                d["rho"] = row.rho;
                rows.append(d);
            }
            return rows;
        },
        py::arg("config"), py::arg("out_dir") = py::none(), py::arg("threads") = 1);

    mod.attr("METRICS_HEADER") = metrics_header();
}
