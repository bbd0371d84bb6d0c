#include "dnsgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dnsgd {

namespace {

constexpr double kExpArgLimit = 700.0;

void guard_exp_argument(double arg) {
    if (!(std::abs(arg) <= kExpArgLimit)) {
        std::ostringstream msg;
        msg << "argument out of safe range: |L*x| = " << std::abs(arg) << " > " << kExpArgLimit;
        throw std::domain_error(msg.str());
    }
}

Vector uniform_in_box(Stream& rng, std::size_t d, double box) {
    Vector x(d);
    for (double& v : x) v = box * (2.0 * rng.uniform() - 1.0);
    return x;
}

bool inside_box(std::span<const double> x, double box) {
    return std::all_of(x.begin(), x.end(), [box](double v) { return std::abs(v) <= box; });
}

/// Zero-sum vectors scaled so the largest has norm exactly zeta.
AgentMatrix draw_offsets(std::size_t m, std::size_t d, double zeta, std::uint64_t seed) {
    AgentMatrix b(m, d);
    if (m < 2 || zeta == 0.0) return b;
    Stream rng = derive_stream({seed, StreamPurpose::offsets, 0, 0});
    for (double& v : b.data()) v = rng.normal();
    const Vector mean = b.mean_row();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) b(i, j) -= mean[j];
    double largest = 0.0;
    for (std::size_t i = 0; i < m; ++i) largest = std::max(largest, norm(b.row(i)));
    if (largest > 0.0) b *= zeta / largest;
    return b;
}

}  // namespace

std::string to_string(ProblemFamily f) {
    switch (f) {
        case ProblemFamily::exp_pair: return "exp_pair";
        case ProblemFamily::poly_even: return "poly_even";
        case ProblemFamily::quadratic: return "quadratic";
    }
    return "unknown";
}

ProblemFamily parse_problem_family(const std::string& s) {
    if (s == "exp_pair") return ProblemFamily::exp_pair;
    if (s == "poly_even") return ProblemFamily::poly_even;
    if (s == "quadratic") return ProblemFamily::quadratic;
    throw std::invalid_argument("unknown problem family '" + s + "'");
}

SmoothnessReport check_relaxed_smooth(const SmoothFunction& f, double l0, double l1,
                                      const SmoothnessCheckOptions& opts) {
    SmoothnessReport report;
    const std::size_t d = f.dim;
    const double radius = l1 > 0.0 ? 1.0 / l1 : 2.0 * opts.box * std::sqrt(static_cast<double>(d));

    auto evaluate = [&](const Vector& x, const Vector& y) {
        const Vector gx = f.grad(x);
        const Vector gy = f.grad(y);
        Vector diff(d);
        Vector step(d);
        for (std::size_t j = 0; j < d; ++j) {
            diff[j] = gx[j] - gy[j];
            step[j] = x[j] - y[j];
        }
        const double gap = norm(diff);
        const double bound = (l0 + l1 * norm(gx)) * norm(step);
        double ratio = 0.0;
        if (bound > 0.0)
            ratio = gap / bound;
        else if (gap > 0.0)
            ratio = std::numeric_limits<double>::infinity();
        ++report.trials;
        if (ratio > 1.0 + opts.tolerance) ++report.violations;
        if (report.trials == 1 || ratio > report.worst_ratio) {
            report.worst_ratio = ratio;
            report.witness_x = x;
            report.witness_y = y;
            report.witness_gap = gap;
            report.witness_bound = bound;
        }
    };

    for (const auto& [x, y] : opts.witnesses) evaluate(x, y);

    Stream rng = derive_stream({opts.seed, StreamPurpose::certification, d, 0});
    Vector y(d);
    for (std::size_t t = 0; t < opts.trials; ++t) {
        for (;;) {
            const Vector x = uniform_in_box(rng, d, opts.box);
            Vector dir(d);
            for (double& v : dir) v = rng.normal();
            const double n = norm(dir);
            if (n == 0.0) continue;
            const double r = radius * rng.uniform();
            for (std::size_t j = 0; j < d; ++j) y[j] = x[j] + r * dir[j] / n;
            if (!inside_box(y, opts.box)) continue;
            evaluate(x, y);
            break;
        }
    }
    report.passed = report.violations == 0;
    return report;
}

double ProblemInstance::local_infimum(std::size_t i) const {
    check_agent(i);
    switch (spec_.family) {
        case ProblemFamily::quadratic: {
            const double bn = norm(offsets_.row(i));
            return -bn * bn / (2.0 * spec_.curvature);
        }
        case ProblemFamily::exp_pair:
        case ProblemFamily::poly_even:
            if (norm(offsets_.row(i)) == 0.0) return f_star_;
            // Coercive base plus a linear term: finite but not closed-form.
            return std::numeric_limits<double>::quiet_NaN();
    }
    return std::numeric_limits<double>::quiet_NaN();
}

void ProblemInstance::check_agent(std::size_t i) const {
    if (i >= spec_.m)
        throw std::out_of_range("agent index " + std::to_string(i) + " out of range (m = " +
                                std::to_string(spec_.m) + ")");
}

void ProblemInstance::check_point(std::span<const double> x) const {
    if (x.size() != spec_.d)
        throw std::invalid_argument("point has dimension " + std::to_string(x.size()) + ", expected " +
                                    std::to_string(spec_.d));
    for (double v : x)
        if (!std::isfinite(v)) throw std::domain_error("non-finite point passed to the oracle");
}

double ProblemInstance::base_value(std::span<const double> x) const {
    const double d = static_cast<double>(spec_.d);
    double s = 0.0;
    switch (spec_.family) {
        case ProblemFamily::exp_pair:
            for (double v : x) {
                const double a = spec_.exp_rate * v;
                guard_exp_argument(a);
                s += 0.5 * (std::exp(a) + std::exp(-a));
            }
            return s / d;
        case ProblemFamily::poly_even:
            for (double v : x) s += std::pow(v, spec_.power);
            return spec_.poly_scale / spec_.power * s;
        case ProblemFamily::quadratic:
            for (double v : x) s += v * v;
            return 0.5 * spec_.curvature * s;
    }
    return s;
}

void ProblemInstance::add_base_grad(std::span<const double> x, std::span<double> out) const {
    const double d = static_cast<double>(spec_.d);
    switch (spec_.family) {
        case ProblemFamily::exp_pair:
            for (std::size_t j = 0; j < x.size(); ++j) {
                const double a = spec_.exp_rate * x[j];
                guard_exp_argument(a);
                out[j] += spec_.exp_rate / d * 0.5 * (std::exp(a) - std::exp(-a));
            }
            return;
        case ProblemFamily::poly_even:
            for (std::size_t j = 0; j < x.size(); ++j)
                out[j] += spec_.poly_scale * std::pow(x[j], spec_.power - 1);
            return;
        case ProblemFamily::quadratic:
            for (std::size_t j = 0; j < x.size(); ++j) out[j] += spec_.curvature * x[j];
            return;
    }
}

double ProblemInstance::value_local(std::size_t i, std::span<const double> x) const {
    check_agent(i);
    check_point(x);
    return base_value(x) + dot(offsets_.row(i), x);
}

Vector ProblemInstance::grad_local(std::size_t i, std::span<const double> x) const {
    check_agent(i);
    check_point(x);
    Vector g(offsets_.row(i).begin(), offsets_.row(i).end());
    add_base_grad(x, g);
    return g;
}

double ProblemInstance::value(std::span<const double> x) const {
    check_point(x);
    return base_value(x) + dot(offset_mean_, x);
}

Vector ProblemInstance::grad(std::span<const double> x) const {
    check_point(x);
    Vector g = offset_mean_;
    add_base_grad(x, g);
    return g;
}

SmoothFunction ProblemInstance::local_function(std::size_t i) const {
    check_agent(i);
    return {spec_.d, [this, i](std::span<const double> x) { return grad_local(i, x); },
            to_string(spec_.family) + "[" + std::to_string(i) + "]"};
}

SmoothFunction ProblemInstance::global_function() const {
    return {spec_.d, [this](std::span<const double> x) { return grad(x); }, to_string(spec_.family)};
}

double poly_even_base_l0(int power, double scale) {
    // Per coordinate h'(s) = a s^p with p = 2q - 1 and l1 = p. Coordinate-wise
    // |h'(s+t) - h'(s)| <= (l0 + l1 |h'(s)|) |t| for |t| <= 1/p implies the
    // vector inequality, so l0 is the supremum of the excess ratio below.
    // h' is odd, so s >= 0 suffices.
    const int p = power - 1;
    const double r = 1.0 / p;
    auto excess = [p](double s, double t) {
        const double hs = std::pow(s, p);
        return (std::abs(std::pow(s + t, p) - hs) - p * std::abs(hs) * std::abs(t)) / std::abs(t);
    };
    // Beyond s_hi the crude bound (s + r)^(p-1) - s^p is negative, so is the excess.
    double s_hi = 1.0;
    while (std::pow(s_hi + r, p - 1) > std::pow(s_hi, p)) s_hi *= 2.0;

    constexpr int kS = 4000;
    constexpr int kT = 400;
    double best = 0.0, best_s = 0.0, best_t = r;
    for (int i = 0; i <= kS; ++i) {
        const double s = s_hi * i / kS;
        for (int j = -kT; j <= kT; ++j) {
            if (j == 0) continue;
            const double t = r * j / kT;
            const double e = excess(s, t);
            if (e > best) {
                best = e;
                best_s = s;
                best_t = t;
            }
        }
    }
    // Zoom in around the best grid point.
    double ds = s_hi / kS, dt = r / kT;
    for (int level = 0; level < 30; ++level) {
        const double cs = best_s, ct = best_t;
        for (int i = -4; i <= 4; ++i) {
            const double s = std::max(0.0, cs + ds * i / 4.0);
            for (int j = -4; j <= 4; ++j) {
                const double t = std::clamp(ct + dt * j / 4.0, -r, r);
                if (t == 0.0) continue;
                const double e = excess(s, t);
                if (e > best) {
                    best = e;
                    best_s = s;
                    best_t = t;
                }
            }
        }
        ds *= 0.5;
        dt *= 0.5;
    }
    return scale * std::max(best, 0.0) * (1.0 + 1e-6);
}

ProblemInstance make_problem(const ProblemSpec& spec) {
    if (spec.d == 0) throw std::invalid_argument("problem dimension must be positive");
    if (spec.m == 0) throw std::invalid_argument("agent count must be positive");
    if (!(spec.zeta >= 0.0) || !(spec.sigma >= 0.0))
        throw std::invalid_argument("zeta and sigma must be non-negative");
    if (!(spec.box > 0.0)) throw std::invalid_argument("certification box must be positive");

    ProblemInstance p;
    p.spec_ = spec;
    switch (spec.family) {
        case ProblemFamily::exp_pair:
            if (!(spec.exp_rate > 0.0)) throw std::invalid_argument("exp_pair requires L > 0");
            p.l1_ = spec.exp_rate / std::numbers::ln2;
            // Per coordinate |sinh(u + t) - sinh(u)| <= |t| (|sinh u| + 3/4) / log 2 for |t| <= log 2,
            // which after the 1/d average gives l0 = 3 L^2 / (4 d log 2).
            p.base_l0_ = 0.75 * spec.exp_rate * spec.exp_rate / (static_cast<double>(spec.d) * std::numbers::ln2);
            p.f_star_ = 1.0;
            break;
        case ProblemFamily::poly_even:
            if (spec.power < 4 || spec.power % 2 != 0)
                throw std::invalid_argument("poly_even requires an even power >= 4");
            if (!(spec.poly_scale > 0.0)) throw std::invalid_argument("poly_even requires scale a > 0");
            p.l1_ = spec.power - 1;
            p.base_l0_ = poly_even_base_l0(spec.power, spec.poly_scale);
            p.f_star_ = 0.0;
            break;
        case ProblemFamily::quadratic:
            if (!(spec.curvature > 0.0)) throw std::invalid_argument("quadratic requires curvature c > 0");
            p.l1_ = 0.0;
            p.base_l0_ = spec.curvature;
            p.f_star_ = 0.0;
            break;
    }
    p.offsets_ = draw_offsets(spec.m, spec.d, spec.zeta, spec.seed);
    p.offset_mean_ = p.offsets_.mean_row();
    double largest = 0.0;
    for (std::size_t i = 0; i < spec.m; ++i) largest = std::max(largest, norm(p.offsets_.row(i)));
    // A linear term shifts gradients by a constant: |grad f_base(x)| <= |grad f_i(x)| + |b_i|.
    p.l0_ = p.base_l0_ + p.l1_ * largest;

    if (spec.certification_trials > 0) {
        for (std::size_t i = 0; i < spec.m; ++i) {
            SmoothnessCheckOptions opts;
            opts.box = spec.box;
            opts.trials = static_cast<std::size_t>(spec.certification_trials);
            opts.seed = mix64(spec.seed) ^ i;
            const SmoothnessReport r = check_relaxed_smooth(p.local_function(i), p.l0_, p.l1_, opts);
            p.certification_ratio_ = std::max(p.certification_ratio_, r.worst_ratio);
            if (!r.passed) {
                std::ostringstream msg;
                msg << "certification of (l0=" << p.l0_ << ", l1=" << p.l1_ << ") failed for agent " << i
                    << ": worst ratio " << r.worst_ratio;
                throw std::logic_error(msg.str());
            }
        }
    }
    return p;
}

ProblemInstance make_exp_pair(std::size_t d, double rate, std::size_t m, double zeta, double sigma,
                              std::uint64_t seed) {
    ProblemSpec s;
    s.family = ProblemFamily::exp_pair;
    s.d = d;
    s.exp_rate = rate;
    s.m = m;
    s.zeta = zeta;
    s.sigma = sigma;
    s.seed = seed;
    return make_problem(s);
}

ProblemInstance make_poly_even(std::size_t d, int power, double scale, std::size_t m, double zeta,
                               double sigma, std::uint64_t seed) {
    ProblemSpec s;
    s.family = ProblemFamily::poly_even;
    s.d = d;
    s.power = power;
    s.poly_scale = scale;
    s.m = m;
    s.zeta = zeta;
    s.sigma = sigma;
    s.seed = seed;
    return make_problem(s);
}

ProblemInstance make_quadratic(std::size_t d, double curvature, std::size_t m, double zeta,
                               double sigma, std::uint64_t seed) {
    ProblemSpec s;
    s.family = ProblemFamily::quadratic;
    s.d = d;
    s.curvature = curvature;
    s.m = m;
    s.zeta = zeta;
    s.sigma = sigma;
    s.seed = seed;
    return make_problem(s);
}

OracleSample sample_grad(const ProblemInstance& p, std::size_t i, std::span<const double> x,
                         std::size_t batch, Stream& stream) {
    if (batch == 0) throw std::invalid_argument("sample_grad: batch size must be >= 1");
    OracleSample s{p.grad_local(i, x), batch};
    if (p.sigma() > 0.0) {
        // The mean of `batch` i.i.d. N(0, sigma^2/d) coordinates is exactly N(0, sigma^2/(d*batch)).
        const double sd = p.sigma() / std::sqrt(static_cast<double>(p.dim()) * static_cast<double>(batch));
        for (double& g : s.grad) g += sd * stream.normal();
    }
    return s;
}

double lf_effective(double l0, double l1, double zeta) { return l0 + l1 * zeta; }

double dissimilarity_measured(const ProblemInstance& p, std::size_t trials, std::uint64_t seed) {
    Stream rng = derive_stream({seed, StreamPurpose::certification, p.dim(), 1});
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Vector x = uniform_in_box(rng, p.dim(), p.box());
        const Vector g = p.grad(x);
        for (std::size_t i = 0; i < p.agents(); ++i) {
            Vector gi = p.grad_local(i, x);
            for (std::size_t j = 0; j < gi.size(); ++j) gi[j] -= g[j];
            worst = std::max(worst, norm(gi));
        }
    }
    return worst;
}

SmoothFunction exp_single(double rate, int sign) {
    const double s = sign >= 0 ? 1.0 : -1.0;
    return {1,
            [rate, s](std::span<const double> x) {
                const double a = s * rate * x[0];
                guard_exp_argument(a);
                return Vector{s * rate * std::exp(a)};
            },
            s > 0 ? "exp(Lx)" : "exp(-Lx)"};
}

SmoothFunction exp_average(double rate) {
    return {1,
            [rate](std::span<const double> x) {
                const double a = rate * x[0];
                guard_exp_argument(a);
                return Vector{0.5 * rate * (std::exp(a) - std::exp(-a))};
            },
            "(exp(Lx)+exp(-Lx))/2"};
}

}  // namespace dnsgd
