#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dnsgd/problems.hpp"

using namespace dnsgd;

namespace {

Vector random_point(Stream& s, std::size_t d, double box) {
    Vector x(d);
    for (double& v : x) v = box * (2.0 * s.uniform() - 1.0);
    return x;
}

/// max_j |fd_j - g_j| / max(1, |g|_inf) with central differences of step h.
double fd_error(const ProblemInstance& p, std::size_t i, const Vector& x, double h = 1e-6) {
    const Vector g = p.grad_local(i, x);
    double scale = 1.0;
    for (double v : g) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        Vector a = x, b = x;
        a[j] += h;
        b[j] -= h;
        const double fd = (p.value_local(i, a) - p.value_local(i, b)) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - g[j]) / scale);
    }
    return worst;
}

}  // namespace

TEST_SUITE("problems") {
    TEST_CASE("two-exponential family values") {
        const ProblemInstance p = make_exp_pair(1, 1.0, 1, 0.0, 0.0, 0);
        CHECK(p.value(Vector{0.0}) == doctest::Approx(1.0));
        CHECK(p.grad(Vector{0.0})[0] == 0.0);
        CHECK(p.grad(Vector{std::log(2.0)})[0] == doctest::Approx(0.75).epsilon(1e-14));
        CHECK(p.l1() == doctest::Approx(1.0 / std::numbers::ln2));
        CHECK(p.f_star() == 1.0);
        const ProblemInstance q = make_exp_pair(1, 2.0, 1, 0.0, 0.0, 0);
        CHECK(q.l1() == doctest::Approx(2.0 / std::numbers::ln2));
        CHECK(q.grad(Vector{std::log(2.0) / 2.0})[0] == doctest::Approx(1.5).epsilon(1e-14));
    }

    TEST_CASE("polynomial and quadratic gradients") {
        const ProblemInstance p = make_poly_even(1, 4, 1.0, 1, 0.0, 0.0, 0);
        CHECK(p.grad(Vector{2.0})[0] == doctest::Approx(8.0));
        CHECK(p.value(Vector{0.0}) == 0.0);
        CHECK(p.f_star() == 0.0);
        CHECK(p.l1() == 3.0);

        const ProblemInstance q = make_quadratic(2, 2.0, 1, 0.0, 0.0, 0);
        const Vector g = q.grad(Vector{1.0, -1.0});
        CHECK(g[0] == doctest::Approx(2.0));
        CHECK(g[1] == doctest::Approx(-2.0));
        CHECK(q.l0() == 2.0);
        CHECK(q.l1() == 0.0);
        CHECK(std::isinf(q.admissible_radius()));
    }

    TEST_CASE("offsets sum to zero and are bounded by zeta") {
        for (ProblemFamily fam : {ProblemFamily::exp_pair, ProblemFamily::poly_even, ProblemFamily::quadratic}) {
            ProblemSpec s;
            s.family = fam;
            s.d = 5;
            s.m = 7;
            s.zeta = 0.5;
            s.seed = 13;
            const ProblemInstance p = make_problem(s);
            const Vector mean = p.offsets().mean_row();
            double largest = 0.0;
            for (double v : mean) CHECK(std::abs(v) <= 1e-12);
            for (std::size_t i = 0; i < 7; ++i) {
                const double n = norm(p.offsets().row(i));
                CHECK(n <= 0.5 + 1e-12);
                largest = std::max(largest, n);
            }
            CHECK(largest == doctest::Approx(0.5));
            CHECK(dissimilarity_measured(p, 50, 4) == doctest::Approx(largest).epsilon(1e-10));
            CHECK(dissimilarity_measured(p, 50, 4) <= p.zeta() + 1e-12);
            CHECK(p.l0() == doctest::Approx(p.base_l0() + p.l1() * largest));
        }
    }

    TEST_CASE("dissimilarity is pointwise exact") {
        const ProblemInstance p = make_exp_pair(3, 1.0, 4, 0.5, 0.0, 2);
        Stream s(1);
        for (int t = 0; t < 20; ++t) {
            const Vector x = random_point(s, 3, 2.0);
            const Vector g = p.grad(x);
            for (std::size_t i = 0; i < 4; ++i) {
                Vector gi = p.grad_local(i, x);
                for (std::size_t j = 0; j < 3; ++j) gi[j] -= g[j];
                CHECK(norm(gi) == doctest::Approx(norm(p.offsets().row(i))).epsilon(1e-9));
            }
        }
        CHECK(dissimilarity_measured(make_exp_pair(3, 1.0, 4, 0.0, 0.0, 2), 20, 1) == 0.0);
    }

    TEST_CASE("global objective is the mean of the locals") {
        const ProblemInstance p = make_poly_even(4, 6, 0.5, 5, 0.7, 0.0, 3);
        Stream s(2);
        for (int t = 0; t < 20; ++t) {
            const Vector x = random_point(s, 4, 1.5);
            double f = 0.0;
            for (std::size_t i = 0; i < 5; ++i) f += p.value_local(i, x) / 5.0;
            CHECK(p.value(x) == doctest::Approx(f).epsilon(1e-12));
        }
    }

    TEST_CASE("analytic gradients match central differences") {
        Stream s(77);
        const ProblemInstance fams[] = {make_exp_pair(6, 1.0, 3, 0.3, 0.0, 1),
                                        make_poly_even(6, 4, 1.0, 3, 0.3, 0.0, 1),
                                        make_quadratic(6, 1.5, 3, 0.3, 0.0, 1)};
        for (const ProblemInstance& p : fams) {
            double worst = 0.0;
            for (int t = 0; t < 100; ++t) {
                const Vector x = random_point(s, 6, 2.0);
                worst = std::max(worst, fd_error(p, static_cast<std::size_t>(t) % 3, x));
            }
            CHECK_MESSAGE(worst <= 1e-6, to_string(p.family()), " worst ", worst);
        }
    }

    TEST_CASE("noiseless oracle returns the exact gradient") {
        const ProblemInstance p = make_exp_pair(3, 1.0, 2, 0.2, 0.0, 0);
        Stream s(1);
        const Vector x{0.3, -0.1, 1.0};
        for (std::size_t b : {1u, 10u, 1000u}) {
            const OracleSample o = sample_grad(p, 1, x, b, s);
            CHECK(o.grad == p.grad_local(1, x));
            CHECK(o.samples_used == b);
        }
        CHECK_THROWS(sample_grad(p, 0, x, 0, s));
    }

    TEST_CASE("oracle mean and variance") {
        const double sigma = 0.7;
        const std::size_t d = 4;
        const ProblemInstance p = make_quadratic(d, 1.0, 2, 0.3, sigma, 5);
        const Vector x{0.5, -1.0, 2.0, 0.0};
        const Vector g = p.grad_local(0, x);
        for (std::size_t b : {1u, 16u}) {
            constexpr int n = 100000;
            Vector mean(d, 0.0);
            double sq = 0.0;
            for (int k = 0; k < n; ++k) {
                Stream s = derive_stream({3, StreamPurpose::oracle, b, static_cast<std::uint64_t>(k)});
                const Vector o = sample_grad(p, 0, x, b, s).grad;
                double e2 = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    mean[j] += o[j] / n;
                    e2 += (o[j] - g[j]) * (o[j] - g[j]);
                }
                sq += e2 / n;
            }
            const double tol = 4.0 * sigma / std::sqrt(static_cast<double>(n) * static_cast<double>(b));
            for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(mean[j] - g[j]) <= tol);
            const double target = sigma * sigma / static_cast<double>(b);
            CHECK(sq >= 0.95 * target);
            CHECK(sq <= 1.05 * target);
        }
    }

    TEST_CASE("effective smoothness constant") {
        CHECK(lf_effective(1, 0, 5) == 1.0);
        CHECK(lf_effective(0, 2, 0.5) == 1.0);
        CHECK(lf_effective(3, 1, 2) == 5.0);
    }

    TEST_CASE("single exponentials pass, their average fails at the witness") {
        for (double L : {1.0, 2.0, 0.5}) {
            const double l1 = L / std::log(2.0);
            SmoothnessCheckOptions o;
            o.trials = 10000;
            o.seed = 3;
            o.box = 5.0 / L;
            for (int sign : {+1, -1}) {
                const SmoothnessReport r = check_relaxed_smooth(exp_single(L, sign), 0.0, l1, o);
                CHECK(r.passed);
                CHECK(r.violations == 0);
                CHECK(r.worst_ratio <= 1.0 + 1e-9);
            }
            o.witnesses.push_back({Vector{0.0}, Vector{std::log(2.0) / L}});
            const SmoothnessReport avg = check_relaxed_smooth(exp_average(L), 0.0, l1, o);
            CHECK_FALSE(avg.passed);
            REQUIRE(avg.witness_x.size() == 1);
            CHECK(avg.witness_x[0] == 0.0);
            CHECK(avg.witness_y[0] == doctest::Approx(std::log(2.0) / L));
            CHECK(avg.witness_bound == 0.0);
            CHECK(std::abs(avg.witness_gap - 0.75 * L) <= 1e-9 * 0.75 * L);
        }
    }

    TEST_CASE("quadratic is exactly smooth without the relaxation") {
        const ProblemInstance q = make_quadratic(3, 2.5, 1, 0.0, 0.0, 0);
        SmoothnessCheckOptions o;
        o.trials = 2000;
        const SmoothnessReport r = check_relaxed_smooth(q.global_function(), 2.5, 0.0, o);
        CHECK(r.passed);
        CHECK(r.worst_ratio <= 1.0 + 1e-12);
        CHECK_FALSE(check_relaxed_smooth(q.global_function(), 2.0, 0.0, o).passed);
    }

    TEST_CASE("stored constants certify every agent and the exp constant is tight") {
        for (ProblemFamily fam : {ProblemFamily::exp_pair, ProblemFamily::poly_even, ProblemFamily::quadratic}) {
            ProblemSpec s;
            s.family = fam;
            s.d = 3;
            s.m = 4;
            s.zeta = 0.4;
            s.seed = 21;
            s.box = fam == ProblemFamily::poly_even ? 3.0 : 5.0;
            const ProblemInstance p = make_problem(s);
            SmoothnessCheckOptions o;
            o.trials = 3000;
            o.box = s.box;
            for (std::size_t i = 0; i < 4; ++i) {
                o.seed = 100 + i;
                CHECK(check_relaxed_smooth(p.local_function(i), p.l0(), p.l1(), o).passed);
            }
            o.seed = 99;
            CHECK(check_relaxed_smooth(p.global_function(), lf_effective(p.l0(), p.l1(), p.zeta()), p.l1(), o).passed);
        }
        const ProblemInstance e = make_exp_pair(1, 1.0, 1, 0.0, 0.0, 0);
        CHECK(e.base_l0() == doctest::Approx(0.75 / std::log(2.0)));
        SmoothnessCheckOptions o;
        o.trials = 0;
        o.witnesses.push_back({Vector{0.0}, Vector{std::log(2.0)}});
        CHECK(check_relaxed_smooth(e.global_function(), e.l0(), e.l1(), o).passed);
        CHECK_FALSE(check_relaxed_smooth(e.global_function(), 0.99 * e.l0(), e.l1(), o).passed);
    }

    TEST_CASE("polynomial constant against a brute-force scan") {
        for (int power : {4, 6}) {
            const int pdeg = power - 1;
            const double l1 = pdeg;
            const double r = 1.0 / l1;
            double need = 0.0;
            for (int a = -4000; a <= 4000; ++a) {
                const double x = a * 1e-3;
                for (int k = 1; k <= 50; ++k) {
                    for (double sgn : {-1.0, 1.0}) {
                        const double t = sgn * r * k / 50.0;
                        const double gx = std::pow(x, pdeg);
                        const double gap = std::abs(std::pow(x + t, pdeg) - gx);
                        need = std::max(need, (gap - l1 * std::abs(gx) * std::abs(t)) / std::abs(t));
                    }
                }
            }
            const double stored = poly_even_base_l0(power, 1.0);
            CHECK(stored >= need);
            CHECK(stored <= 1.01 * need);
            CHECK(poly_even_base_l0(power, 2.0) == doctest::Approx(2.0 * stored));
        }
    }

    TEST_CASE("quadratic local infimum by completing the square") {
        const ProblemInstance p = make_quadratic(3, 2.0, 4, 0.8, 0.0, 7);
        for (std::size_t i = 0; i < 4; ++i) {
            Vector x(3, 1.0);
            for (int it = 0; it < 2000; ++it) {
                const Vector g = p.grad_local(i, x);
                for (std::size_t j = 0; j < 3; ++j) x[j] -= 0.25 * g[j];
            }
            CHECK(p.local_infimum(i) == doctest::Approx(p.value_local(i, x)).epsilon(1e-12));
        }
        CHECK(p.f_star() == 0.0);
        CHECK(p.value(Vector(3, 0.0)) == 0.0);
    }

    TEST_CASE("overflow and argument errors") {
        const ProblemInstance p = make_exp_pair(2, 1.0, 2, 0.0, 0.0, 0);
        try {
            p.grad_local(0, Vector{800.0, 0.0});
            FAIL("expected an exception");
        } catch (const std::domain_error& e) {
            CHECK(std::string(e.what()).find("argument out of safe range") != std::string::npos);
        }
        CHECK_THROWS(p.grad_local(2, Vector{0.0, 0.0}));
        CHECK_THROWS(p.grad_local(0, Vector{0.0}));
        CHECK_THROWS(p.grad_local(0, Vector{std::nan(""), 0.0}));
        CHECK_THROWS(make_exp_pair(2, 0.0, 2, 0.0, 0.0, 0));
        CHECK_THROWS(make_poly_even(2, 5, 1.0, 2, 0.0, 0.0, 0));
        CHECK_THROWS(make_quadratic(2, -1.0, 2, 0.0, 0.0, 0));
        CHECK_THROWS(make_quadratic(2, 1.0, 2, -0.1, 0.0, 0));
        CHECK(parse_problem_family("poly_even") == ProblemFamily::poly_even);
        CHECK_THROWS(parse_problem_family("cubic"));
    }
}
