#include "dnsgd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "dnsgd/gossip.hpp"
#include "json.hpp"

namespace dnsgd {

using json = nlohmann::ordered_json;

ConfigError::ConfigError(const std::string& source, std::size_t line, const std::string& field,
                         const std::string& msg)
    : std::runtime_error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) +
                         (field.empty() ? std::string() : ": " + field) + ": " + msg),
      line_(line),
      field_(field) {}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::uint64_t seed_for_run(std::uint64_t master_seed, std::size_t k) {
    Stream s = derive_stream({master_seed, StreamPurpose::seed_fanout, k, 0});
    return s();
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Reader {
public:
    Reader(const std::string& text, const std::string& source) : text_(text), source_(source) {}

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        throw ConfigError(source_, line_of(path), path, msg);
    }

    /// Line of the last key of `path`, found by walking its components in order.
    std::size_t line_of(const std::string& path) const {
        std::size_t pos = 0;
        std::size_t start = 1;
        bool found = false;
        while (start <= path.size()) {
            std::size_t end = path.find('/', start);
            if (end == std::string::npos) end = path.size();
            const std::string key = path.substr(start, end - start);
            start = end + 1;
            if (key.empty() || std::all_of(key.begin(), key.end(), ::isdigit)) continue;
            const std::size_t at = text_.find('"' + key + '"', pos);
            if (at == std::string::npos) break;
            pos = at;
            found = true;
        }
        if (!found) return 0;
        return 1 + static_cast<std::size_t>(std::count(text_.begin(), text_.begin() + pos, '\n'));
    }

    void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) const {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) {
                std::string allowed;
                for (const char* k : keys) allowed += std::string(allowed.empty() ? "" : ", ") + k;
                fail(path + "/" + it.key(), "unknown field (allowed: " + allowed + ")");
            }
        }
    }

    const json& object(const json& parent, const std::string& key, const std::string& path) const {
        if (!parent.contains(key)) fail(path + "/" + key, "missing required object");
        const json& v = parent.at(key);
        if (!v.is_object()) fail(path + "/" + key, "expected an object");
        return v;
    }

    double number(const json& v, const std::string& path) const {
        if (!v.is_number()) fail(path, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) fail(path, "expected a finite number");
        return d;
    }

    std::optional<double> opt_number(const json& obj, const std::string& key, const std::string& path) const {
        if (!obj.contains(key)) return std::nullopt;
        return number(obj.at(key), path + "/" + key);
    }

    double nonneg(const json& obj, const std::string& key, const std::string& path, double fallback) const {
        const auto v = opt_number(obj, key, path);
        if (!v) return fallback;
        if (*v < 0.0) fail(path + "/" + key, "must be >= 0");
        return *v;
    }

    double positive(const json& obj, const std::string& key, const std::string& path,
                    std::optional<double> fallback) const {
        const auto v = opt_number(obj, key, path);
        if (!v) {
            if (!fallback) fail(path + "/" + key, "missing required number");
            return *fallback;
        }
        if (!(*v > 0.0)) fail(path + "/" + key, "must be > 0");
        return *v;
    }

    std::uint64_t integer(const json& v, const std::string& path) const {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer()) {
            if (v.get<std::int64_t>() < 0) fail(path, "must be a non-negative integer");
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        }
        fail(path, "expected a non-negative integer");
    }

    std::optional<std::uint64_t> opt_integer(const json& obj, const std::string& key,
                                             const std::string& path) const {
        if (!obj.contains(key)) return std::nullopt;
        return integer(obj.at(key), path + "/" + key);
    }

    std::string string(const json& obj, const std::string& key, const std::string& path,
                       std::optional<std::string> fallback) const {
        if (!obj.contains(key)) {
            if (!fallback) fail(path + "/" + key, "missing required string");
            return *fallback;
        }
        const json& v = obj.at(key);
        if (!v.is_string()) fail(path + "/" + key, "expected a string");
        return v.get<std::string>();
    }

    template <class F>
    auto parse_enum(const json& obj, const std::string& key, const std::string& path, F parser,
                    std::optional<std::string> fallback) const {
        const std::string s = string(obj, key, path, fallback);
        try {
            return parser(s);
        } catch (const std::invalid_argument& e) {
            fail(path + "/" + key, e.what());
        }
    }

private:
    const std::string& text_;
    std::string source_;
};

ProblemSpec parse_problem(const Reader& r, const json& o, bool& seed_given) {
    const std::string P = "/problem";
    r.only_keys(o, P, {"family", "d", "m", "zeta", "sigma", "seed", "box", "L", "power", "scale", "curvature",
                       "certification_trials"});
    ProblemSpec s;
    s.family = r.parse_enum(o, "family", P, parse_problem_family, std::nullopt);
    const auto d = r.opt_integer(o, "d", P);
    if (!d || *d < 1) r.fail(P + "/d", "dimension must be an integer >= 1");
    s.d = *d;
    const auto m = r.opt_integer(o, "m", P);
    if (!m || *m < 1) r.fail(P + "/m", "agent count must be an integer >= 1");
    s.m = *m;
    s.zeta = r.nonneg(o, "zeta", P, 0.0);
    s.sigma = r.nonneg(o, "sigma", P, 0.0);
    if (auto seed = r.opt_integer(o, "seed", P)) {
        s.seed = *seed;
        seed_given = true;
    }
    s.box = r.positive(o, "box", P, 5.0);
    s.exp_rate = r.positive(o, "L", P, 1.0);
    if (auto pw = r.opt_integer(o, "power", P)) {
        if (*pw < 4 || *pw % 2 != 0) r.fail(P + "/power", "power must be an even integer >= 4");
        s.power = static_cast<int>(*pw);
    }
    s.poly_scale = r.positive(o, "scale", P, 1.0);
    s.curvature = r.positive(o, "curvature", P, 1.0);
    if (auto ct = r.opt_integer(o, "certification_trials", P)) s.certification_trials = static_cast<int>(*ct);
    return s;
}

TopologySpec parse_topology(const Reader& r, const json& o) {
    const std::string P = "/topology";
    r.only_keys(o, P, {"kind", "p", "seed"});
    TopologySpec t;
    t.kind = r.parse_enum(o, "kind", P, parse_topology_kind, std::nullopt);
    t.p = r.opt_number(o, "p", P);
    if (t.p && t.kind != TopologyKind::erdos_renyi) r.fail(P + "/p", "edge probability only applies to erdos_renyi");
    if (t.kind == TopologyKind::erdos_renyi && !t.p) r.fail(P + "/p", "erdos_renyi requires an edge probability");
    if (t.p && !(*t.p > 0.0 && *t.p <= 1.0)) r.fail(P + "/p", "edge probability must lie in (0, 1]");
    t.seed = r.opt_integer(o, "seed", P);
    return t;
}

HyperParams parse_hyperparams(const Reader& r, const json& o) {
    const std::string P = "/hyperparams";
    r.only_keys(o, P, {"eta", "batch", "iterations", "k_inner", "k_init", "epsilon"});
    HyperParams hp;
    hp.eta = r.positive(o, "eta", P, std::nullopt);
    const auto b = r.opt_integer(o, "batch", P);
    if (b && *b < 1) r.fail(P + "/batch", "batch must be >= 1");
    hp.batch = b.value_or(1);
    const auto T = r.opt_integer(o, "iterations", P);
    if (!T) r.fail(P + "/iterations", "missing required integer");
    hp.iterations = *T;
    hp.k_inner = static_cast<int>(r.opt_integer(o, "k_inner", P).value_or(1));
    hp.k_init = static_cast<int>(r.opt_integer(o, "k_init", P).value_or(1));
    hp.epsilon = r.nonneg(o, "epsilon", P, 0.0);
    return hp;
}

AutoSpec parse_auto(const Reader& r, const json& o) {
    const std::string P = "/auto";
    r.only_keys(o, P, {"epsilon", "t_cap", "c_k", "c_k_init", "k_policy"});
    AutoSpec a;
    if (!o.contains("epsilon")) r.fail(P + "/epsilon", "\"auto\" hyperparameters require epsilon");
    a.epsilon = r.positive(o, "epsilon", P, std::nullopt);
    if (auto cap = r.opt_integer(o, "t_cap", P)) a.t_cap = *cap;
    a.c_k = r.positive(o, "c_k", P, 2.0);
    a.c_k_init = r.positive(o, "c_k_init", P, 1.0);
    a.k_policy = r.parse_enum(o, "k_policy", P, parse_k_policy, std::string("guard"));
    return a;
}

SweepSpec parse_sweep(const Reader& r, const json& o) {
    const std::string P = "/sweep";
    r.only_keys(o, P, {"m_list", "target_epsilon"});
    SweepSpec s;
    if (o.contains("m_list")) {
        const json& l = o.at("m_list");
        if (!l.is_array() || l.empty()) r.fail(P + "/m_list", "expected a non-empty array of agent counts");
        s.m_list.clear();
        for (std::size_t i = 0; i < l.size(); ++i) {
            const auto m = r.integer(l[i], P + "/m_list/" + std::to_string(i));
            if (m < 1) r.fail(P + "/m_list/" + std::to_string(i), "agent count must be >= 1");
            s.m_list.push_back(m);
        }
    }
    s.target_epsilon = r.positive(o, "target_epsilon", P, std::nullopt);
    return s;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& source) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error& e) {
        const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
        const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
        throw ConfigError(source, line, "", std::string("malformed JSON: ") + e.what());
    }
    const Reader r(text, source);
    if (!root.is_object()) r.fail("", "top level must be an object");
    r.only_keys(root, "", {"problem", "topology", "algorithm", "hyperparams", "auto", "master_seed", "num_seeds",
                           "snapshot_every", "output", "dnasa_schedule", "stop_at_grad_norm", "sweep", "x0"});

    RunConfig cfg;
    cfg.problem = parse_problem(r, r.object(root, "problem", ""), cfg.problem_seed_given);
    cfg.topology = parse_topology(r, r.object(root, "topology", ""));
    cfg.algorithm = r.parse_enum(root, "algorithm", "", parse_algorithm, std::string("dnsgd"));

    if (!root.contains("hyperparams")) r.fail("/hyperparams", "missing (give \"auto\" or an object)");
    const json& hp = root.at("hyperparams");
    if (hp.is_string()) {
        if (hp.get<std::string>() != "auto") r.fail("/hyperparams", "expected \"auto\" or an object");
        if (!root.contains("auto") || !root.at("auto").is_object())
            r.fail("/auto", "\"auto\" hyperparameters require an auto object with epsilon");
        cfg.auto_params = parse_auto(r, root.at("auto"));
    } else if (hp.is_object()) {
        cfg.hyperparams = parse_hyperparams(r, hp);
        if (root.contains("auto")) r.fail("/auto", "only used with \"hyperparams\": \"auto\"");
    } else {
        r.fail("/hyperparams", "expected \"auto\" or an object");
    }

    if (auto s = r.opt_integer(root, "master_seed", "")) cfg.master_seed = *s;
    if (auto n = r.opt_integer(root, "num_seeds", "")) {
        if (*n < 1) r.fail("/num_seeds", "must be >= 1");
        cfg.num_seeds = *n;
    }
    if (auto n = r.opt_integer(root, "snapshot_every", "")) cfg.snapshot_every = *n;
    cfg.output = r.string(root, "output", "", std::string("out"));
    cfg.dnasa_schedule = r.parse_enum(root, "dnasa_schedule", "", parse_dnasa_schedule, std::string("decaying"));
    if (root.contains("stop_at_grad_norm"))
        cfg.stop_at_grad_norm = r.positive(root, "stop_at_grad_norm", "", std::nullopt);
    if (root.contains("sweep")) {
        if (!root.at("sweep").is_object()) r.fail("/sweep", "expected an object");
        cfg.sweep = parse_sweep(r, root.at("sweep"));
    }
    if (root.contains("x0")) {
        const json& x = root.at("x0");
        if (x.is_number()) {
            cfg.x0.assign(cfg.problem.d, r.number(x, "/x0"));
        } else if (x.is_array()) {
            if (x.size() != cfg.problem.d)
                r.fail("/x0", "has " + std::to_string(x.size()) + " entries, problem dimension is " +
                                  std::to_string(cfg.problem.d));
            for (std::size_t i = 0; i < x.size(); ++i) cfg.x0.push_back(r.number(x[i], "/x0/" + std::to_string(i)));
        } else {
            r.fail("/x0", "expected a number or an array");
        }
    } else {
        cfg.x0.assign(cfg.problem.d, 1.0);
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), 0, "", "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string RunConfig::to_json() const {
    json j;
    json p;
    p["family"] = to_string(problem.family);
    p["d"] = problem.d;
    p["m"] = problem.m;
    p["zeta"] = problem.zeta;
    p["sigma"] = problem.sigma;
    if (problem_seed_given) p["seed"] = problem.seed;
    p["box"] = problem.box;
    switch (problem.family) {
        case ProblemFamily::exp_pair: p["L"] = problem.exp_rate; break;
        case ProblemFamily::poly_even:
            p["power"] = problem.power;
            p["scale"] = problem.poly_scale;
            break;
        case ProblemFamily::quadratic: p["curvature"] = problem.curvature; break;
    }
    p["certification_trials"] = problem.certification_trials;
    j["problem"] = p;
    json t;
    t["kind"] = to_string(topology.kind);
    if (topology.p) t["p"] = *topology.p;
    if (topology.seed) t["seed"] = *topology.seed;
    j["topology"] = t;
    j["algorithm"] = to_string(algorithm);
    if (hyperparams) {
        json h;
        h["eta"] = hyperparams->eta;
        h["batch"] = hyperparams->batch;
        h["iterations"] = hyperparams->iterations;
        h["k_inner"] = hyperparams->k_inner;
        h["k_init"] = hyperparams->k_init;
        h["epsilon"] = hyperparams->epsilon;
        j["hyperparams"] = h;
    } else {
        j["hyperparams"] = "auto";
        json a;
        a["epsilon"] = auto_params->epsilon;
        if (auto_params->t_cap) a["t_cap"] = *auto_params->t_cap;
        a["c_k"] = auto_params->c_k;
        a["c_k_init"] = auto_params->c_k_init;
        a["k_policy"] = to_string(auto_params->k_policy);
        j["auto"] = a;
    }
    j["master_seed"] = master_seed;
    j["num_seeds"] = num_seeds;
    j["snapshot_every"] = snapshot_every;
    j["output"] = output;
    j["dnasa_schedule"] = to_string(dnasa_schedule);
    if (stop_at_grad_norm) j["stop_at_grad_norm"] = *stop_at_grad_norm;
    if (sweep) {
        json s;
        s["m_list"] = sweep->m_list;
        s["target_epsilon"] = sweep->target_epsilon;
        j["sweep"] = s;
    }
    j["x0"] = x0;
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Setup

namespace {

std::uint64_t derived_seed(std::uint64_t master, StreamPurpose purpose) {
    Stream s = derive_stream({master, purpose, 0, 0});
    return s();
}

PreparedRun prepare_with(const RunConfig& cfg, ProblemInstance problem, Graph graph) {
    MixingMatrix w = metropolis_mixing(graph);
    Vector x0 = cfg.x0;
    if (x0.size() != problem.dim())
        throw std::invalid_argument("x0 has dimension " + std::to_string(x0.size()) + ", problem has " +
                                    std::to_string(problem.dim()));
    const double delta_f = problem.value(x0) - problem.f_star();

    std::optional<TheoreticalParams> theory;
    HyperParams hp;
    if (cfg.auto_params) {
        TheoryOptions opts;
        opts.c_k = cfg.auto_params->c_k;
        opts.c_k_init = cfg.auto_params->c_k_init;
        opts.k_policy = cfg.auto_params->k_policy;
        opts.t_cap = cfg.auto_params->t_cap;
        double s = 0.0;
        for (std::size_t i = 0; i < problem.agents(); ++i) {
            const double g = norm(problem.grad_local(i, x0));
            s += g * g;
        }
        opts.grad_sq_sum_x0 = s;
        theory = theorem1_params(cfg.auto_params->epsilon, problem.l0(), problem.l1(), problem.zeta(),
                                 problem.sigma(), problem.agents(), w.gamma(), delta_f, opts);
        hp = theory->hp;
    } else {
        hp = *cfg.hyperparams;
    }
    hp.validate();
    const double rho = contraction_rho(w.lambda2(), hp.k_inner);
    const RhoGuard guard = rho_guard(rho, problem.l0(), problem.l1(), problem.zeta(), problem.sigma(),
                                     problem.agents(), hp.eta, hp.batch, hp.epsilon > 0.0 ? hp.epsilon : 1.0);
    return PreparedRun{std::move(problem), std::move(graph), std::move(w), hp, theory, guard, rho,
                       std::move(x0), delta_f};
}

}  // namespace

PreparedRun prepare(const RunConfig& cfg) {
    ProblemSpec spec = cfg.problem;
    if (!cfg.problem_seed_given) spec.seed = derived_seed(cfg.master_seed, StreamPurpose::offsets);
    TopologyOptions topt;
    topt.p = cfg.topology.p;
    topt.seed = cfg.topology.seed ? *cfg.topology.seed : derived_seed(cfg.master_seed, StreamPurpose::topology);
    Graph g = build_topology(cfg.topology.kind, spec.m, topt);
    return prepare_with(cfg, make_problem(spec), std::move(g));
}

// ---------------------------------------------------------------------------
// Running

namespace {

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (workers <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

RunOptions run_options(const RunConfig& cfg) {
    RunOptions o;
    o.snapshot_every = cfg.snapshot_every;
    o.stop_at_grad_norm = cfg.stop_at_grad_norm;
    o.schedule = cfg.dnasa_schedule;
    return o;
}

std::vector<SeedRun> run_seeds(const RunConfig& cfg, const PreparedRun& prep, const RunOptions& ropts,
                               unsigned threads) {
    std::vector<SeedRun> runs(cfg.num_seeds);
    parallel_for(cfg.num_seeds, threads, [&](std::size_t k) {
        runs[k].index = k;
        runs[k].seed = seed_for_run(cfg.master_seed, k);
        runs[k].traj = run(cfg.algorithm, prep.problem, prep.hp, prep.w, prep.x0, runs[k].seed, ropts);
    });
    return runs;
}

constexpr double kTrackerTol = 1e-8;
constexpr double kMeanIterateTol = 1e-10;
constexpr double kStepTol = 1e-9;

bool is_tracking(Algorithm a) { return a != Algorithm::dsgd; }
bool is_normalized(Algorithm a) { return a == Algorithm::dnsgd || a == Algorithm::dnasa; }

std::vector<CheckOutcome> evaluate_checks(const RunConfig& cfg, const PreparedRun& prep,
                                          const std::vector<SeedRun>& runs) {
    std::vector<CheckOutcome> out;
    const std::size_t m = prep.problem.agents();
    for (const SeedRun& r : runs) {
        const OnlineChecks& c = r.traj.checks;
        if (is_tracking(cfg.algorithm)) {
            out.push_back({"tracker_identity", r.index, true, c.tracker_violation <= kTrackerTol, true,
                           c.tracker_violation, kTrackerTol, ""});
        }
        if (is_normalized(cfg.algorithm)) {
            out.push_back({"mean_iterate", r.index, true, c.mean_iterate_violation <= kMeanIterateTol, true,
                           c.mean_iterate_violation, kMeanIterateTol, ""});
            out.push_back({"step_length", r.index, true, c.max_step_ratio <= 1.0 + kStepTol, true, c.max_step_ratio,
                           1.0, "max |xbar' - xbar| / eta"});
        }
        if (cfg.algorithm == Algorithm::dnsgd) {
            const VerificationReport l2 = verify_lemma2(r.traj, prep.rho, m, prep.hp.eta);
            out.push_back({"consensus_bound", r.index, l2.applicable, l2.passed, true, l2.worst_value, l2.bound,
                           l2.applicable ? std::to_string(l2.violations) + " violations" : l2.note});
        }
        out.push_back({"box_exits", r.index, true, c.box_exits == 0, false, static_cast<double>(c.box_exits), 0.0,
                       "recorded iterations with an agent outside the certification box"});
    }

    if (cfg.algorithm == Algorithm::dnsgd && !runs.empty()) {
        std::vector<Trajectory> trajs;
        for (const SeedRun& r : runs) trajs.push_back(r.traj);
        const bool deterministic = prep.problem.sigma() == 0.0;
        const double lf = lf_effective(prep.problem.l0(), prep.problem.l1(), prep.problem.zeta());
        const DescentReport d = verify_descent(trajs, prep.hp.eta, lf, prep.problem.f_star(), deterministic);
        const bool guard = prep.guard.ok;
        const std::string why = guard ? "" : "rho guard not met; reported only";
        if (deterministic) {
            out.push_back({"descent_per_step", std::nullopt, true, d.per_step_passed, guard, d.worst_excess, 1e-9,
                           std::to_string(d.violations) + " violations" + (why.empty() ? "" : "; " + why)});
            out.push_back({"descent_telescoped", std::nullopt, true, d.telescoped_passed, guard, d.min_grad_norm,
                           d.averaged_bound, why});
        }
        const bool statistical = deterministic || runs.size() >= 10;
        out.push_back({"descent_averaged", std::nullopt, true, d.averaged_passed, guard && statistical,
                       d.averaged_value, d.averaged_bound,
                       !guard ? why : (statistical ? "" : "fewer than 10 seeds; reported only")});
    }

    const double eps = prep.hp.epsilon;
    if (eps > 0.0 && !runs.empty()) {
        double mean = 0.0;
        double agent_worst = 0.0;
        for (const SeedRun& r : runs) {
            const StationaritySummary s = stationarity_summary(r.traj);
            mean += s.mean_grad_norm;
            agent_worst = std::max(agent_worst, s.agent_mean_grad_max);
        }
        mean /= static_cast<double>(runs.size());
        out.push_back({"stationarity_mean", std::nullopt, true, mean <= eps, false, mean, eps,
                       "seed mean of (1/T) sum |grad f(xbar^t)|"});
        out.push_back({"stationarity_agents", std::nullopt, true, agent_worst <= eps, false, agent_worst, eps,
                       "max over seeds and agents of (1/T) sum |grad f(x_i^t)|"});
    }
    return out;
}

std::string describe_checks(const std::vector<CheckOutcome>& checks) {
    std::ostringstream os;
    for (const CheckOutcome& c : checks) {
        os << "  " << (c.applicable ? (c.passed ? "PASS" : (c.assertion ? "FAIL" : "WARN")) : "N/A ") << "  "
           << c.name;
        if (c.seed_index) os << " [seed " << *c.seed_index << "]";
        os << ": value " << format_double(c.value) << ", bound " << format_double(c.bound);
        if (!c.note.empty()) os << " (" << c.note << ")";
        os << '\n';
    }
    return os.str();
}

std::string verification_csv(const std::vector<CheckOutcome>& checks) {
    std::ostringstream os;
    os << "check,seed_index,applicable,passed,assertion,value,bound,note\n";
    for (const CheckOutcome& c : checks) {
        os << c.name << ',' << (c.seed_index ? std::to_string(*c.seed_index) : std::string()) << ','
           << c.applicable << ',' << c.passed << ',' << c.assertion << ',' << format_double(c.value) << ','
           << format_double(c.bound) << ',';
        std::string note = c.note;
        std::replace(note.begin(), note.end(), ',', ';');
        os << note << '\n';
    }
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("error writing " + path.string());
}

std::string describe_setup(const RunConfig& cfg, const PreparedRun& prep) {
    std::ostringstream os;
    os.precision(10);
    const ProblemInstance& p = prep.problem;
    os << "algorithm  " << to_string(cfg.algorithm) << '\n';
    os << "problem    " << to_string(p.family()) << "  d=" << p.dim() << " m=" << p.agents() << " zeta=" << p.zeta()
       << " sigma=" << p.sigma() << '\n';
    os << "           l0=" << p.l0() << " l1=" << p.l1() << " f*=" << p.f_star()
       << " certification ratio=" << p.certification_ratio() << '\n';
    os << "topology   " << to_string(prep.graph.kind()) << "  edges=" << prep.graph.edges().size()
       << " lambda2=" << prep.w.lambda2() << " gamma=" << prep.w.gamma() << '\n';
    os << "hyper      eta=" << prep.hp.eta << " b=" << prep.hp.batch << " T=" << prep.hp.iterations
       << " K=" << prep.hp.k_inner << " K_init=" << prep.hp.k_init << " epsilon=" << prep.hp.epsilon << '\n';
    os << "rho        " << prep.rho << "  guard " << prep.guard.required << " ["
       << (prep.guard.ok ? "ok" : "NOT MET") << "]  per-agent " << prep.guard.agent_required << " ["
       << (prep.guard.agent_ok ? "ok" : "NOT MET") << "]  M2=" << prep.guard.m2 << " M3=" << prep.guard.m3 << '\n';
    os << "Delta_f    " << prep.delta_f << '\n';
    if (prep.theory) os << '\n' << prep.theory->describe();
    return os.str();
}

}  // namespace

std::string metrics_header() {
    return "algorithm,seed_index,seed,t,f_mean,grad_norm_mean,grad_norm_agent_max,cons_x,cons_v,phi,"
           "samples_per_agent,comm_rounds";
}

std::string metrics_csv(const Trajectory& traj, std::size_t seed_index, std::uint64_t seed) {
    std::string out = metrics_header() + "\n";
    const std::string prefix = traj.algorithm + "," + std::to_string(seed_index) + "," + std::to_string(seed) + ",";
    for (const MetricsRow& r : traj.rows) {
        out += prefix;
        out += std::to_string(r.t) + ",";
        for (double v : {r.f_mean, r.grad_norm_mean, r.grad_norm_agent_max, r.cons_x, r.cons_v, r.phi})
            out += format_double(v) + ",";
        out += std::to_string(r.samples_per_agent) + "," + std::to_string(r.comm_rounds) + "\n";
    }
    return out;
}

ExperimentResult run_experiment(const RunConfig& cfg, const ExperimentOptions& opts) {
    const PreparedRun prep = prepare(cfg);
    ExperimentResult res;
    res.runs = run_seeds(cfg, prep, run_options(cfg), opts.threads);
    res.checks = evaluate_checks(cfg, prep, res.runs);
    for (const CheckOutcome& c : res.checks)
        if (c.applicable && c.assertion && !c.passed) res.exit_code = 1;

    std::ostringstream os;
    os.precision(10);
    os << describe_setup(cfg, prep) << '\n';
    os << "runs\n";
    for (const SeedRun& r : res.runs) {
        const StationaritySummary s = stationarity_summary(r.traj);
        os << "  seed " << r.index << " (" << r.seed << "): T=" << r.traj.iterations()
           << (r.traj.stopped_early ? " (stopped early)" : "") << " min |grad f|=" << s.min_grad_norm
           << " mean |grad f|=" << s.mean_grad_norm << " agent output max=" << s.agent_output_grad_max
           << " agent mean max=" << s.agent_mean_grad_max << '\n';
    }
    os << "\nchecks\n" << describe_checks(res.checks);
    os << "\nresult " << (res.exit_code == 0 ? "PASS" : "FAIL") << '\n';
    res.summary = os.str();

    res.out_dir = opts.out_dir ? *opts.out_dir : std::filesystem::path(cfg.output);
    if (opts.write_files) {
        std::filesystem::create_directories(res.out_dir);
        write_file(res.out_dir / "config.json", cfg.to_json());
        for (const SeedRun& r : res.runs)
            write_file(res.out_dir / ("metrics_seed" + std::to_string(r.index) + ".csv"),
                       metrics_csv(r.traj, r.index, r.seed));
        write_file(res.out_dir / "summary.txt", res.summary);
        write_file(res.out_dir / "verification.csv", verification_csv(res.checks));
    }
    return res;
}

SweepResult sweep_speedup(const RunConfig& cfg, const ExperimentOptions& opts) {
    if (!cfg.sweep) throw std::invalid_argument("sweep_speedup: config has no sweep section");
    SweepResult res;
    std::ostringstream csv;
    csv << "m,seeds,reached,status,mean_samples_per_agent,mean_comm_rounds,mean_iterations,batch,k_inner,rho\n";
    for (std::size_t m : cfg.sweep->m_list) {
        RunConfig c = cfg;
        c.problem.m = m;
        c.stop_at_grad_norm = cfg.sweep->target_epsilon;
        const PreparedRun prep = prepare(c);
        const std::vector<SeedRun> runs = run_seeds(c, prep, run_options(c), opts.threads);

        SpeedupRow row;
        row.m = m;
        row.seeds = runs.size();
        row.batch = prep.hp.batch;
        row.k_inner = prep.hp.k_inner;
        row.rho = prep.rho;
        for (const SeedRun& r : runs) {
            row.tracker_violation = std::max(row.tracker_violation, r.traj.checks.tracker_violation);
            if (c.algorithm == Algorithm::dnsgd)
                row.lemma2_violations += verify_lemma2(r.traj, prep.rho, m, prep.hp.eta).violations;
            const MetricsRow& last = r.traj.rows.back();
            if (last.grad_norm_mean > cfg.sweep->target_epsilon) continue;
            ++row.reached;
            row.mean_samples += static_cast<double>(last.samples_per_agent);
            row.mean_comm += static_cast<double>(last.comm_rounds);
            row.mean_iterations += static_cast<double>(last.t);
        }
        const char* status = "target not reached";
        if (row.reached > 0) {
            const double n = static_cast<double>(row.reached);
            row.mean_samples /= n;
            row.mean_comm /= n;
            row.mean_iterations /= n;
            status = row.reached == row.seeds ? "reached" : "partial";
        }
        csv << m << ',' << row.seeds << ',' << row.reached << ',' << status << ','
            << (row.reached ? format_double(row.mean_samples) : "") << ','
            << (row.reached ? format_double(row.mean_comm) : "") << ','
            << (row.reached ? format_double(row.mean_iterations) : "") << ',' << row.batch << ',' << row.k_inner
            << ',' << format_double(row.rho) << '\n';
        res.rows.push_back(row);
    }
    res.csv = csv.str();
    res.out_dir = opts.out_dir ? *opts.out_dir : std::filesystem::path(cfg.output);
    if (opts.write_files) {
        std::filesystem::create_directories(res.out_dir);
        write_file(res.out_dir / "config.json", cfg.to_json());
        write_file(res.out_dir / "speedup.csv", res.csv);
    }
    return res;
}

}  // namespace dnsgd
