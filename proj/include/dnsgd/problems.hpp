#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnsgd/agent_matrix.hpp"
#include "dnsgd/rng.hpp"

namespace dnsgd {

enum class ProblemFamily { exp_pair, poly_even, quadratic };

std::string to_string(ProblemFamily f);
ProblemFamily parse_problem_family(const std::string& s);

/// Everything needed to build a ProblemInstance. Family-specific fields are
/// ignored by the other families.
struct ProblemSpec {
    ProblemFamily family = ProblemFamily::quadratic;
    std::size_t d = 1;
    std::size_t m = 1;
    double zeta = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    double box = 5.0;  ///< certification region: ||x||_inf <= box

    double exp_rate = 1.0;   ///< exp_pair: L
    int power = 4;           ///< poly_even: even power 2q >= 4
    double poly_scale = 1.0; ///< poly_even: a
    double curvature = 1.0;  ///< quadratic: c

    int certification_trials = 200;  ///< sampled pairs per agent at construction
};

/// Smooth function handle used by the certification sampler.
struct SmoothFunction {
    std::size_t dim = 1;
    std::function<Vector(std::span<const double>)> grad;
    std::string name;
};

struct SmoothnessReport {
    bool passed = true;
    std::size_t trials = 0;
    std::size_t violations = 0;
    double worst_ratio = 0.0;  ///< max gap / ((l0 + l1 |grad f(x)|) |x - y|)
    Vector witness_x;
    Vector witness_y;
    double witness_gap = 0.0;    ///< |grad f(x) - grad f(y)| at the witness
    double witness_bound = 0.0;  ///< (l0 + l1 |grad f(x)|) |x - y| at the witness
};

struct SmoothnessCheckOptions {
    double box = 5.0;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    /// Ratios up to 1 + tolerance count as passing; covers rounding on the
    /// boundary |x - y| = 1/l1 where the bound can be attained exactly.
    double tolerance = 1e-9;
    /// Pairs evaluated before sampling.
    std::vector<std::pair<Vector, Vector>> witnesses;
};

/// Samples pairs with |x - y| <= 1/l1 (unrestricted when l1 = 0) inside the
/// box and tests |grad f(x) - grad f(y)| <= (l0 + l1 |grad f(x)|) |x - y|.
SmoothnessReport check_relaxed_smooth(const SmoothFunction& f, double l0, double l1,
                                      const SmoothnessCheckOptions& opts);

/// Analytic relaxed-smooth local functions f_i = f_base + <b_i, x> with
/// zero-sum heterogeneity offsets b_i, |b_i| <= zeta.
class ProblemInstance {
public:
    ProblemFamily family() const { return spec_.family; }
    const ProblemSpec& spec() const { return spec_; }
    std::size_t dim() const { return spec_.d; }
    std::size_t agents() const { return spec_.m; }
    double l0() const { return l0_; }
    double l1() const { return l1_; }
    double base_l0() const { return base_l0_; }
    double zeta() const { return spec_.zeta; }
    double sigma() const { return spec_.sigma; }
    double box() const { return spec_.box; }
    const AgentMatrix& offsets() const { return offsets_; }
    /// Radius of the ball on which the smoothness inequality is required.
    double admissible_radius() const {
        return l1_ > 0.0 ? 1.0 / l1_ : std::numeric_limits<double>::infinity();
    }
    /// inf f over R^d.
    double f_star() const { return f_star_; }
    /// inf f_i over R^d (quadratic family only has a finite value with offsets).
    double local_infimum(std::size_t i) const;
    /// Worst ratio seen while certifying (l0, l1) at construction.
    double certification_ratio() const { return certification_ratio_; }

    double value_local(std::size_t i, std::span<const double> x) const;
    Vector grad_local(std::size_t i, std::span<const double> x) const;
    /// f = (1/m) sum_i f_i.
    double value(std::span<const double> x) const;
    Vector grad(std::span<const double> x) const;

    SmoothFunction local_function(std::size_t i) const;
    SmoothFunction global_function() const;

    friend ProblemInstance make_problem(const ProblemSpec& spec);

private:
    double base_value(std::span<const double> x) const;
    void add_base_grad(std::span<const double> x, std::span<double> out) const;
    void check_agent(std::size_t i) const;
    void check_point(std::span<const double> x) const;

    ProblemSpec spec_;
    double l0_ = 0.0;
    double l1_ = 0.0;
    double base_l0_ = 0.0;
    double f_star_ = 0.0;
    double certification_ratio_ = 0.0;
    AgentMatrix offsets_;
    Vector offset_mean_;
};

/// Builds the instance, draws offsets and certifies (l0, l1) on sampled pairs
/// for every agent. Throws std::logic_error if certification fails.
ProblemInstance make_problem(const ProblemSpec& spec);

ProblemInstance make_exp_pair(std::size_t d, double rate, std::size_t m, double zeta, double sigma,
                              std::uint64_t seed);
ProblemInstance make_poly_even(std::size_t d, int power, double scale, std::size_t m, double zeta,
                               double sigma, std::uint64_t seed);
ProblemInstance make_quadratic(std::size_t d, double curvature, std::size_t m, double zeta,
                               double sigma, std::uint64_t seed);

/// Smallest l0 making the per-coordinate power family (scale a, odd
/// derivative power p = 2q - 1) relaxed smooth with l1 = p.
double poly_even_base_l0(int power, double scale);

struct OracleSample {
    Vector grad;
    std::size_t samples_used = 0;
};

/// Minibatch stochastic gradient: grad f_i(x) plus the mean of `batch`
/// i.i.d. spherical Gaussians with total variance sigma^2 each.
OracleSample sample_grad(const ProblemInstance& p, std::size_t i, std::span<const double> x,
                         std::size_t batch, Stream& stream);

double lf_effective(double l0, double l1, double zeta);

/// max over sampled x in the box and agents of |grad f_i(x) - grad f(x)|.
double dissimilarity_measured(const ProblemInstance& p, std::size_t trials, std::uint64_t seed);

/// One-dimensional exp(sign * L x) used in the two-exponential counterexample.
SmoothFunction exp_single(double rate, int sign);
/// (exp(L x) + exp(-L x)) / 2.
SmoothFunction exp_average(double rate);

}  // namespace dnsgd
