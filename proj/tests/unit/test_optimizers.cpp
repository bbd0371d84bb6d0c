#include <cmath>

#include "doctest.h"
#include "dnsgd/gossip.hpp"
#include "dnsgd/optimizers.hpp"

using namespace dnsgd;

namespace {

MixingMatrix ring(std::size_t m) { return metropolis_mixing(build_topology(TopologyKind::ring, m)); }

HyperParams params(double eta, std::size_t T, int k = 3, int k_init = 3, std::size_t b = 1) {
    HyperParams hp;
    hp.eta = eta;
    hp.iterations = T;
    hp.k_inner = k;
    hp.k_init = k_init;
    hp.batch = b;
    hp.epsilon = 0.1;
    return hp;
}

double rel_mean_gap(const AgentMatrix& a, const AgentMatrix& b) {
    const Vector ma = a.mean_row();
    const Vector mb = b.mean_row();
    double gap = 0.0, scale = 1.0;
    for (std::size_t j = 0; j < ma.size(); ++j) {
        gap = std::max(gap, std::abs(ma[j] - mb[j]));
        scale = std::max(scale, std::abs(mb[j]));
    }
    return gap / scale;
}

}  // namespace

TEST_SUITE("optimizers") {
    TEST_CASE("row normalization") {
        AgentMatrix v(3, 2);
        v(0, 0) = 3;
        v(0, 1) = 4;
        v(2, 0) = 1e-13;
        const AgentMatrix u = normalize_rows(v);
        CHECK(u(0, 0) == doctest::Approx(0.6));
        CHECK(u(0, 1) == doctest::Approx(0.8));
        CHECK(u(1, 0) == 0.0);
        CHECK(u(1, 1) == 0.0);
        CHECK(u(2, 0) == 0.0);

        Stream s(4);
        AgentMatrix r(100, 5);
        for (double& e : r.data()) e = s.normal() * std::pow(10.0, static_cast<double>(s.below(12)) - 6.0);
        const AgentMatrix ur = normalize_rows(r);
        for (std::size_t i = 0; i < 100; ++i) {
            const double n = norm(ur.row(i));
            CHECK((n == 0.0 || std::abs(n - 1.0) <= 1e-12));
        }
        AgentMatrix bad(1, 2);
        bad(0, 0) = INFINITY;
        CHECK_THROWS(normalize_rows(bad));
        CHECK_THROWS(normalize_rows(v, 0.0));
    }

    TEST_CASE("initialization") {
        const MixingMatrix w = ring(6);
        const ProblemInstance clean = make_exp_pair(3, 1.0, 6, 0.0, 0.0, 1);
        const Vector x0{0.5, -0.2, 1.0};
        const OptimizerState s = dnsgd_init(clean, x0, params(0.1, 10, 3, 4, 5), w, OracleStreams{9});
        const Vector g = clean.grad(x0);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 3; ++j) CHECK(s.v(i, j) == doctest::Approx(g[j]).epsilon(1e-13));
        CHECK(s.samples_per_agent == 5);
        CHECK(s.comm_rounds == 4);
        CHECK(s.t == 0);

        const ProblemInstance noisy = make_exp_pair(3, 1.0, 6, 0.4, 0.5, 1);
        const OptimizerState a = dnsgd_init(noisy, x0, params(0.1, 10, 3, 2), w, OracleStreams{9});
        CHECK(rel_mean_gap(a.v, a.g_prev) <= 1e-10);
        const OptimizerState b = dnsgd_init(noisy, x0, params(0.1, 10, 3, 200), w, OracleStreams{9});
        CHECK(b.v.consensus_error() <= 1e-6 * b.g_prev.consensus_error());
    }

    TEST_CASE("single agent reduces to normalized gradient descent") {
        const ProblemInstance q = make_quadratic(1, 1.0, 1, 0.0, 0.0, 0);
        const MixingMatrix w = ring(1);
        const HyperParams hp = params(0.5, 2, 1, 1);
        OptimizerState s = dnsgd_init(q, Vector{2.0}, hp, w, OracleStreams{0});
        s = dnsgd_step(s, q, hp, w, OracleStreams{0});
        CHECK(s.x(0, 0) == doctest::Approx(1.5));
        s = dnsgd_step(s, q, hp, w, OracleStreams{0});
        CHECK(s.x(0, 0) == doctest::Approx(1.0));
        CHECK(s.comm_rounds == 1 + 2 * 2);
        CHECK(s.samples_per_agent == 3);
    }

    TEST_CASE("single agent D-SGD is gradient descent") {
        const ProblemInstance q = make_quadratic(1, 1.0, 1, 0.0, 0.0, 0);
        const MixingMatrix w = ring(1);
        const HyperParams hp = params(0.1, 1);
        OptimizerState s = baseline_init(q, Vector{1.0}, hp, w, OracleStreams{0});
        s = dsgd_step(s, q, hp, w, OracleStreams{0});
        CHECK(s.x(0, 0) == doctest::Approx(0.9));
        CHECK(s.comm_rounds == 1);
    }

    TEST_CASE("step-level identities for DNSGD and D-SGT") {
        const ProblemInstance p = make_exp_pair(4, 1.0, 8, 0.3, 0.2, 3);
        const MixingMatrix w = metropolis_mixing(build_topology(TopologyKind::erdos_renyi, 8, {0.5, 1}));
        const HyperParams hp = params(0.05, 50, 4, 4, 3);
        const OracleStreams st{5};
        const Vector x0(4, 1.0);
        OptimizerState s = dnsgd_init(p, x0, hp, w, st);
        for (int t = 0; t < 50; ++t) {
            const AgentMatrix u = normalize_rows(s.v);
            const Vector xbar = s.x.mean_row();
            const Vector ubar = u.mean_row();
            const OptimizerState n = dnsgd_step(s, p, hp, w, st);
            const Vector nbar = n.x.mean_row();
            double dev = 0.0, step = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                dev = std::max(dev, std::abs(nbar[j] - xbar[j] + hp.eta * ubar[j]));
                step += (nbar[j] - xbar[j]) * (nbar[j] - xbar[j]);
            }
            CHECK(dev <= 1e-10);
            CHECK(std::sqrt(step) <= hp.eta * (1.0 + 1e-12));
            CHECK(rel_mean_gap(n.v, n.g_prev) <= 1e-8);
            s = n;
        }
        OptimizerState g = baseline_init(p, x0, hp, w, st);
        for (int t = 0; t < 50; ++t) {
            g = dsgt_step(g, p, hp, w, st);
            CHECK(rel_mean_gap(g.v, g.g_prev) <= 1e-8);
        }
        CHECK(g.comm_rounds == 100);
    }

    TEST_CASE("fixed-step D-SGD stalls on heterogeneous data where D-SGT does not") {
        const ProblemInstance q = make_quadratic(5, 1.0, 8, 1.0, 0.0, 4);
        const MixingMatrix w = ring(8);
        const HyperParams hp = params(0.1, 1500);
        const Vector x0(5, 1.0);
        const Trajectory sgd = run(Algorithm::dsgd, q, hp, w, x0, 1);
        const Trajectory sgt = run(Algorithm::dsgt, q, hp, w, x0, 1);
        const double floor_sgd = sgd.rows.back().grad_norm_agent_max;
        const double floor_sgt = sgt.rows.back().grad_norm_agent_max;
        CHECK(floor_sgd > 1e-2);
        CHECK(floor_sgt < 1e-6);
        CHECK(sgt.checks.tracker_violation <= 1e-8);
    }

    TEST_CASE("run bookkeeping") {
        const ProblemInstance p = make_exp_pair(3, 1.0, 4, 0.2, 0.1, 3);
        const MixingMatrix w = ring(4);
        const Vector x0(3, 1.0);

        const Trajectory empty = run(Algorithm::dnsgd, p, params(0.1, 0), w, x0, 1);
        CHECK(empty.rows.size() == 1);
        CHECK(empty.iterations() == 0);

        const HyperParams hp = params(0.05, 37, 3, 5, 2);
        RunOptions o;
        o.snapshot_every = 10;
        const Trajectory tr = run(Algorithm::dnsgd, p, hp, w, x0, 8, o);
        REQUIRE(tr.rows.size() == 38);
        for (std::size_t t = 0; t < tr.rows.size(); ++t) {
            CHECK(tr.rows[t].t == t);
            CHECK(tr.rows[t].samples_per_agent == 2 * (t + 1));
            CHECK(tr.rows[t].comm_rounds == 5 + 6 * t);
        }
        REQUIRE(tr.snapshots.size() == 5);
        CHECK(tr.snapshots.back().t == 37);
        for (std::size_t i = 0; i < 4; ++i) {
            Stream s = derive_stream({8, StreamPurpose::output_draw, i, 0});
            CHECK(tr.output_index[i] == s.below(37));
            CHECK(std::isfinite(tr.output_grad_norm[i]));
            CHECK(tr.output_iterate[i].size() == 3);
        }
        CHECK(tr.checks.tracker_violation <= 1e-8);
        CHECK(tr.checks.mean_iterate_violation <= 1e-10);
        CHECK(tr.checks.max_step_ratio <= 1.0 + 1e-12);

        const Trajectory again = run(Algorithm::dnsgd, p, hp, w, x0, 8, o);
        for (std::size_t t = 0; t < tr.rows.size(); ++t) {
            CHECK(tr.rows[t].phi == again.rows[t].phi);
            CHECK(tr.rows[t].cons_v == again.rows[t].cons_v);
        }
        CHECK(tr.snapshots.back().x == again.snapshots.back().x);
        const Trajectory other = run(Algorithm::dnsgd, p, hp, w, x0, 9, o);
        CHECK(other.rows.back().f_mean != tr.rows.back().f_mean);
    }

    TEST_CASE("single-agent trajectory has equal agent and mean gradients") {
        const ProblemInstance p = make_poly_even(2, 4, 1.0, 1, 0.0, 0.3, 2);
        const Trajectory tr = run(Algorithm::dnsgd, p, params(0.02, 40), ring(1), Vector{1.0, -1.0}, 3);
        for (const MetricsRow& r : tr.rows) {
            CHECK(r.grad_norm_agent_max == r.grad_norm_mean);
            CHECK(r.cons_x == 0.0);
        }
    }

    TEST_CASE("early stop") {
        const ProblemInstance q = make_quadratic(2, 1.0, 4, 0.0, 0.0, 0);
        RunOptions o;
        o.stop_at_grad_norm = 0.5;
        const Trajectory tr = run(Algorithm::dnsgd, q, params(0.1, 500), ring(4), Vector{2.0, 2.0}, 0, o);
        CHECK(tr.stopped_early);
        CHECK(tr.rows.back().grad_norm_mean <= 0.5);
        CHECK(tr.rows[tr.rows.size() - 2].grad_norm_mean > 0.5);
    }

    TEST_CASE("divergence is reported with its iteration") {
        const ProblemInstance q = make_quadratic(2, 1.0, 2, 0.0, 0.0, 0);
        try {
            run(Algorithm::dsgd, q, params(1e100, 100), ring(2), Vector{1.0, 1.0}, 0);
            FAIL("expected divergence");
        } catch (const NonFiniteState& e) {
            CHECK(e.iteration() > 0);
            CHECK(e.agent() < 2);
            CHECK(std::string(e.what()).find("iteration") != std::string::npos);
        }
    }

    TEST_CASE("D-NASA schedules") {
        CHECK(dnasa_step_size(10.0, 16, 0, DnasaSchedule::decaying) == doctest::Approx(2.0));
        CHECK(dnasa_step_size(10.0, 16, 15, DnasaSchedule::decaying) == doctest::Approx(2.0 / 8.0));
        CHECK(dnasa_step_size(0.1, 16, 0, DnasaSchedule::decaying) == 0.1);
        CHECK(dnasa_step_size(0.1, 16, 100, DnasaSchedule::literal) == 0.1);
        for (std::size_t t = 1; t < 100; ++t)
            CHECK(dnasa_step_size(1.0, 4, t, DnasaSchedule::decaying) <= dnasa_step_size(1.0, 4, t - 1, DnasaSchedule::decaying));
        CHECK(parse_dnasa_schedule("literal") == DnasaSchedule::literal);
        CHECK_THROWS(parse_dnasa_schedule("cosine"));

        const ProblemInstance p = make_exp_pair(3, 1.0, 4, 0.2, 0.0, 3);
        const Trajectory tr = run(Algorithm::dnasa, p, params(0.05, 200), ring(4), Vector(3, 1.5), 1);
        CHECK(tr.rows.back().grad_norm_mean < tr.rows.front().grad_norm_mean);
        CHECK(tr.checks.tracker_violation <= 1e-8);
        CHECK(tr.checks.mean_iterate_violation <= 1e-10);
    }

    TEST_CASE("argument checks") {
        const ProblemInstance p = make_quadratic(2, 1.0, 4, 0.0, 0.0, 0);
        CHECK_THROWS(run(Algorithm::dnsgd, p, params(0.1, 5), ring(3), Vector{1.0, 1.0}, 0));
        CHECK_THROWS(run(Algorithm::dnsgd, p, params(0.1, 5), ring(4), Vector{1.0}, 0));
        CHECK_THROWS(run(Algorithm::dnsgd, p, params(0.0, 5), ring(4), Vector{1.0, 1.0}, 0));
        CHECK(parse_algorithm("dsgt") == Algorithm::dsgt);
        CHECK_THROWS(parse_algorithm("adam"));
    }
}
