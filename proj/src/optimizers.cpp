#include "dnsgd/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dnsgd/gossip.hpp"

namespace dnsgd {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::dnsgd: return "dnsgd";
        case Algorithm::dsgd: return "dsgd";
        case Algorithm::dsgt: return "dsgt";
        case Algorithm::dnasa: return "dnasa";
    }
    return "?";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "dnsgd") return Algorithm::dnsgd;
    if (s == "dsgd") return Algorithm::dsgd;
    if (s == "dsgt") return Algorithm::dsgt;
    if (s == "dnasa") return Algorithm::dnasa;
    throw std::invalid_argument("unknown algorithm '" + s + "' (expected dnsgd, dsgd, dsgt or dnasa)");
}

std::string to_string(DnasaSchedule s) { return s == DnasaSchedule::decaying ? "decaying" : "literal"; }

DnasaSchedule parse_dnasa_schedule(const std::string& s) {
    if (s == "decaying") return DnasaSchedule::decaying;
    if (s == "literal") return DnasaSchedule::literal;
    throw std::invalid_argument("unknown dnasa_schedule '" + s + "' (expected decaying or literal)");
}

NonFiniteState::NonFiniteState(std::size_t iteration, std::size_t agent, const std::string& what)
    : std::runtime_error("non-finite " + what + " at iteration " + std::to_string(iteration) + ", agent " +
                         std::to_string(agent)),
      iteration_(iteration),
      agent_(agent) {}

namespace {

void check_rows(const AgentMatrix& a, std::size_t t, const char* what) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (double e : a.row(i))
            if (!std::isfinite(e)) throw NonFiniteState(t, i, what);
}

void check_state(const OptimizerState& s) {
    check_rows(s.x, s.t, "iterate");
    check_rows(s.v, s.t, "tracker");
}

void check_shapes(const ProblemInstance& p, std::span<const double> x0, const MixingMatrix& w) {
    if (x0.size() != p.dim()) throw std::invalid_argument("x0 has dimension " + std::to_string(x0.size()) +
                                                          ", problem has " + std::to_string(p.dim()));
    if (w.size() != p.agents())
        throw std::invalid_argument("mixing matrix has " + std::to_string(w.size()) + " agents, problem has " +
                                    std::to_string(p.agents()));
}

AgentMatrix mix(const AgentMatrix& y, const MixingMatrix& w) {
    AgentMatrix out(y.rows(), y.cols());
    w.apply(y, out);
    return out;
}

}  // namespace

AgentMatrix normalize_rows(const AgentMatrix& v, double eps_norm) {
    if (!(eps_norm > 0.0)) throw std::invalid_argument("normalize_rows: eps_norm must be positive");
    v.require_finite("normalize_rows input");
    AgentMatrix out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.rows(); ++i) {
        const double n = norm(v.row(i));
        if (n <= eps_norm) continue;
        auto src = v.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / n;
    }
    return out;
}

AgentMatrix sample_gradients(const ProblemInstance& p, const AgentMatrix& x, std::size_t batch,
                             const OracleStreams& streams, std::size_t iteration) {
    AgentMatrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        Stream s = streams.stream(i, iteration);
        const OracleSample sample = sample_grad(p, i, x.row(i), batch, s);
        std::copy(sample.grad.begin(), sample.grad.end(), g.row(i).begin());
    }
    return g;
}

OptimizerState dnsgd_init(const ProblemInstance& p, std::span<const double> x0, const HyperParams& hp,
                          const MixingMatrix& w, const OracleStreams& streams) {
    hp.validate();
    check_shapes(p, x0, w);
    OptimizerState s;
    s.x = AgentMatrix::broadcast(p.agents(), x0);
    s.g_prev = sample_gradients(p, s.x, hp.batch, streams, 0);
    s.v = acc_gossip(s.g_prev, w, hp.k_init);
    s.samples_per_agent = hp.batch;
    s.comm_rounds = static_cast<std::size_t>(hp.k_init);
    check_state(s);
    return s;
}

OptimizerState dnsgd_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                          const MixingMatrix& w, const OracleStreams& streams, double eps_norm) {
    OptimizerState n;
    n.t = s.t + 1;
    AgentMatrix u = normalize_rows(s.v, eps_norm);
    n.x = acc_gossip(s.x - hp.eta * u, w, hp.k_inner);
    check_rows(n.x, n.t, "iterate");
    n.g_prev = sample_gradients(p, n.x, hp.batch, streams, n.t);
    AgentMatrix tracked = s.v;
    tracked += n.g_prev;
    tracked -= s.g_prev;
    n.v = acc_gossip(tracked, w, hp.k_inner);
    n.samples_per_agent = s.samples_per_agent + hp.batch;
    n.comm_rounds = s.comm_rounds + 2 * static_cast<std::size_t>(hp.k_inner);
    check_state(n);
    return n;
}

OptimizerState baseline_init(const ProblemInstance& p, std::span<const double> x0, const HyperParams& hp,
                             const MixingMatrix& w, const OracleStreams& streams) {
    hp.validate();
    check_shapes(p, x0, w);
    OptimizerState s;
    s.x = AgentMatrix::broadcast(p.agents(), x0);
    s.g_prev = sample_gradients(p, s.x, hp.batch, streams, 0);
    s.v = s.g_prev;
    s.samples_per_agent = hp.batch;
    check_state(s);
    return s;
}

OptimizerState dsgd_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                         const MixingMatrix& w, const OracleStreams& streams) {
    OptimizerState n;
    n.t = s.t + 1;
    n.x = mix(s.x - hp.eta * s.g_prev, w);
    check_rows(n.x, n.t, "iterate");
    n.g_prev = sample_gradients(p, n.x, hp.batch, streams, n.t);
    n.v = n.g_prev;
    n.samples_per_agent = s.samples_per_agent + hp.batch;
    n.comm_rounds = s.comm_rounds + 1;
    check_state(n);
    return n;
}

OptimizerState dsgt_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                         const MixingMatrix& w, const OracleStreams& streams) {
    OptimizerState n;
    n.t = s.t + 1;
    n.x = mix(s.x - hp.eta * s.v, w);
    check_rows(n.x, n.t, "iterate");
    n.g_prev = sample_gradients(p, n.x, hp.batch, streams, n.t);
    n.v = mix(s.v, w);
    n.v += n.g_prev;
    n.v -= s.g_prev;
    n.samples_per_agent = s.samples_per_agent + hp.batch;
    n.comm_rounds = s.comm_rounds + 2;
    check_state(n);
    return n;
}

double dnasa_step_size(double eta_max, std::size_t m, std::size_t t, DnasaSchedule schedule) {
    const double scale = std::pow(static_cast<double>(m), 0.25);
    const double tt = std::pow(static_cast<double>(t + 1), 0.75);
    const double eta_t = schedule == DnasaSchedule::decaying ? scale / tt : scale * tt;
    return std::min(eta_max, eta_t);
}

OptimizerState dnasa_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                          const MixingMatrix& w, const OracleStreams& streams, DnasaSchedule schedule,
                          double eps_norm) {
    OptimizerState n;
    n.t = s.t + 1;
    const double eta_t = dnasa_step_size(hp.eta, p.agents(), s.t, schedule);
    n.x = mix(s.x - eta_t * normalize_rows(s.v, eps_norm), w);
    check_rows(n.x, n.t, "iterate");
    n.g_prev = sample_gradients(p, n.x, hp.batch, streams, n.t);
    n.v = mix(s.v, w);
    n.v += n.g_prev;
    n.v -= s.g_prev;
    n.samples_per_agent = s.samples_per_agent + hp.batch;
    n.comm_rounds = s.comm_rounds + 2;
    check_state(n);
    return n;
}

namespace {

double inf_norm(std::span<const double> v) {
    double r = 0.0;
    for (double e : v) r = std::max(r, std::abs(e));
    return r;
}

class Recorder {
public:
    Recorder(Algorithm alg, const ProblemInstance& p, const HyperParams& hp, const RunOptions& opts,
             std::uint64_t master_seed)
        : p_(p), hp_(hp), opts_(opts), sums_(p.agents(), 0.0) {
        traj_.algorithm = to_string(alg);
        const std::size_t m = p.agents();
        traj_.output_index.assign(m, 0);
        traj_.output_grad_norm.assign(m, std::numeric_limits<double>::quiet_NaN());
        traj_.output_iterate.assign(m, Vector{});
        for (std::size_t i = 0; i < m; ++i) {
            Stream s = derive_stream({master_seed, StreamPurpose::output_draw, i, 0});
            if (hp.iterations > 0) traj_.output_index[i] = static_cast<std::size_t>(s.below(hp.iterations));
        }
        tracking_ = alg != Algorithm::dsgd;
    }

    /// Returns true when the run should stop.
    bool record(const OptimizerState& s) {
        MetricsRow row = compute_metrics(s.t, s.x, s.v, p_, hp_.eta, s.samples_per_agent, s.comm_rounds);
        traj_.rows.push_back(row);

        bool outside = false;
        for (std::size_t i = 0; i < s.x.rows(); ++i) {
            auto xi = s.x.row(i);
            if (inf_norm(xi) > p_.box()) outside = true;
            const bool in_horizon = s.t < hp_.iterations;
            const bool is_output = in_horizon && traj_.output_index[i] == s.t;
            if (!in_horizon && !(hp_.iterations == 0 && s.t == 0)) continue;
            const double gn = norm(p_.grad(xi));
            if (in_horizon) sums_[i] += gn;
            if (is_output || (hp_.iterations == 0 && s.t == 0)) {
                traj_.output_grad_norm[i] = gn;
                traj_.output_iterate[i].assign(xi.begin(), xi.end());
            }
        }
        if (outside) ++traj_.checks.box_exits;
        if (s.t < hp_.iterations) ++averaged_;

        if (tracking_) {
            const Vector vbar = s.v.mean_row();
            const Vector gbar = s.g_prev.mean_row();
            double diff = 0.0;
            for (std::size_t j = 0; j < vbar.size(); ++j) diff = std::max(diff, std::abs(vbar[j] - gbar[j]));
            traj_.checks.tracker_violation =
                std::max(traj_.checks.tracker_violation, diff / std::max(1.0, inf_norm(gbar)));
        }

        const bool last = s.t == hp_.iterations;
        if (opts_.snapshot_every > 0 && (s.t % opts_.snapshot_every == 0 || last))
            traj_.snapshots.push_back({s.t, s.x});
        if (opts_.stop_at_grad_norm && row.grad_norm_mean <= *opts_.stop_at_grad_norm && !last) {
            traj_.stopped_early = true;
            if (opts_.snapshot_every > 0 && s.t % opts_.snapshot_every != 0) traj_.snapshots.push_back({s.t, s.x});
            return true;
        }
        return false;
    }

    /// Mean-iterate and step-length checks between consecutive states; `dir`
    /// is the normalized direction used and `eta` the step applied.
    void record_step(const OptimizerState& before, const OptimizerState& after, const AgentMatrix* dir,
                     double eta) {
        const Vector a = before.x.mean_row();
        const Vector b = after.x.mean_row();
        Vector delta(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) delta[j] = b[j] - a[j];
        traj_.checks.max_step_ratio = std::max(traj_.checks.max_step_ratio, norm(delta) / hp_.eta);
        if (dir) {
            const Vector u = dir->mean_row();
            double worst = 0.0;
            for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(delta[j] + eta * u[j]));
            traj_.checks.mean_iterate_violation = std::max(traj_.checks.mean_iterate_violation, worst);
        }
    }

    Trajectory finish() {
        traj_.agent_grad_norm_mean.assign(sums_.size(), 0.0);
        const double n = static_cast<double>(std::max<std::size_t>(averaged_, 1));
        for (std::size_t i = 0; i < sums_.size(); ++i) traj_.agent_grad_norm_mean[i] = sums_[i] / n;
        return std::move(traj_);
    }

private:
    const ProblemInstance& p_;
    const HyperParams& hp_;
    const RunOptions& opts_;
    Trajectory traj_;
    std::vector<double> sums_;
    std::size_t averaged_ = 0;
    bool tracking_ = true;
};

}  // namespace

Trajectory run(Algorithm algorithm, const ProblemInstance& p, const HyperParams& hp, const MixingMatrix& w,
               std::span<const double> x0, std::uint64_t master_seed, const RunOptions& opts) {
    const OracleStreams streams{master_seed};
    Recorder rec(algorithm, p, hp, opts, master_seed);
    OptimizerState s = algorithm == Algorithm::dnsgd ? dnsgd_init(p, x0, hp, w, streams)
                                                     : baseline_init(p, x0, hp, w, streams);
    if (rec.record(s)) return rec.finish();
    while (s.t < hp.iterations) {
        OptimizerState next;
        switch (algorithm) {
            case Algorithm::dnsgd: {
                next = dnsgd_step(s, p, hp, w, streams, opts.eps_norm);
                const AgentMatrix u = normalize_rows(s.v, opts.eps_norm);
                rec.record_step(s, next, &u, hp.eta);
                break;
            }
            case Algorithm::dsgd:
                next = dsgd_step(s, p, hp, w, streams);
                rec.record_step(s, next, nullptr, hp.eta);
                break;
            case Algorithm::dsgt:
                next = dsgt_step(s, p, hp, w, streams);
                rec.record_step(s, next, nullptr, hp.eta);
                break;
            case Algorithm::dnasa: {
                next = dnasa_step(s, p, hp, w, streams, opts.schedule, opts.eps_norm);
                const AgentMatrix u = normalize_rows(s.v, opts.eps_norm);
                rec.record_step(s, next, &u, dnasa_step_size(hp.eta, p.agents(), s.t, opts.schedule));
                break;
            }
        }
        s = std::move(next);
        if (rec.record(s)) break;
    }
    return rec.finish();
}

}  // namespace dnsgd
