#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dnsgd/agent_matrix.hpp"
#include "dnsgd/metrics.hpp"
#include "dnsgd/problems.hpp"

namespace dnsgd {

struct HyperParams {
    double eta = 0.0;
    std::size_t batch = 1;       ///< b
    std::size_t iterations = 0;  ///< T
    int k_inner = 1;             ///< K, gossip rounds per update
    int k_init = 1;              ///< K-hat, gossip rounds for the initial tracker
    double epsilon = 0.0;

    /// Throws std::invalid_argument on non-positive step, batch or rounds.
    void validate() const;
};

/// M0 = sqrt(2 (l0^2 + l1^2 zeta^2)), M1 = sqrt(2) l1.
struct LyapunovConstants {
    double m0 = 0.0;
    double m1 = 0.0;
};
LyapunovConstants lyapunov_constants(double l0, double l1, double zeta);

/// Phi = f(xbar) + (3 eta / sqrt m)(M0 + M1 |grad f(xbar)|) |X - 1 xbar|
///              + (2 eta / sqrt m) |V - 1 vbar|.
double lyapunov_phi(const AgentMatrix& x, const AgentMatrix& v, const ProblemInstance& p, double eta);

MetricsRow compute_metrics(std::size_t t, const AgentMatrix& x, const AgentMatrix& v,
                           const ProblemInstance& p, double eta, std::size_t samples,
                           std::size_t comm_rounds);

/// The smallness conditions on rho required by the per-step Lyapunov descent,
/// plus the per-agent condition used for agent-level stationarity.
struct RhoGuard {
    double rho = 0.0;
    double m2 = 0.0;  ///< (rho + 1) L_f + rho L_f L1 eta
    double m3 = 0.0;  ///< rho L1 (L1 eta + 1) + L1
    /// Upper bounds on rho; +inf where a condition is vacuous (L1 = 0).
    std::array<double, 6> terms{};
    double required = 0.0;        ///< min(terms)
    bool batch_ok = false;        ///< 2 sigma / sqrt(m b) <= eta L_f / 8
    bool ok = false;              ///< rho <= required && batch_ok
    double agent_required = 0.0;  ///< eps / (2 m eta L_f + (m eta L1 + 1) eps)
    bool agent_ok = false;
};

RhoGuard rho_guard(double rho, double l0, double l1, double zeta, double sigma, std::size_t m,
                   double eta, std::size_t batch, double epsilon);

enum class KPolicy {
    formula,  ///< K = ceil(C_K log(max(m,2)) / sqrt(gamma)) only
    guard,    ///< max of the formula and the smallest K satisfying rho_guard
};

std::string to_string(KPolicy k);
KPolicy parse_k_policy(const std::string& s);

struct TheoryOptions {
    double c_k = 2.0;
    double c_k_init = 1.0;
    KPolicy k_policy = KPolicy::guard;
    std::optional<std::size_t> t_cap;
    /// sum_i |grad f_i(x0)|^2, used by the initial-round formula.
    double grad_sq_sum_x0 = 0.0;
};

struct TheoreticalParams {
    HyperParams hp;
    double l_f = 0.0;
    double m0 = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
    double m3 = 0.0;
    double delta_f = 0.0;
    double delta_phi = 0.0;  ///< 2 delta_f
    double gamma = 0.0;
    double rho = 0.0;        ///< contraction factor at K
    double rho_required = 0.0;
    double rho_agent_required = 0.0;
    bool guard_ok = false;
    bool agent_guard_ok = false;
    bool eta_first_branch = true;  ///< eta = eps / (4 L_f + 1) is the active cap
    double batch_terms[2] = {0.0, 0.0};
    double iteration_terms[2] = {0.0, 0.0};
    bool t_capped = false;
    int k_formula = 0;
    int k_guard = 0;  ///< smallest K satisfying every rho condition
    int k_init_formula = 0;
    int k_init_guard = 0;
    KPolicy k_policy = KPolicy::guard;

    std::string describe() const;
};

/// Step size, batch, horizon and gossip rounds from the convergence theorem,
/// with the initial-consensus refinement (Delta_Phi = 2 Delta_f).
TheoreticalParams theorem1_params(double epsilon, double l0, double l1, double zeta, double sigma,
                                  std::size_t m, double gamma, double delta_f,
                                  const TheoryOptions& opts = {});

struct VerificationReport {
    bool applicable = true;
    bool passed = true;
    double bound = 0.0;
    double worst_value = 0.0;
    std::size_t worst_t = 0;
    double worst_slack = 0.0;  ///< min over t of bound - value
    std::size_t violations = 0;
    std::string note;
};

/// |X^t - 1 xbar^t| <= rho m eta / (1 - rho) for every recorded t >= 1.
VerificationReport verify_lemma2(const Trajectory& traj, double rho, std::size_t m, double eta);

struct DescentReport {
    bool deterministic = false;
    // Per-step check (deterministic runs).
    bool per_step_passed = true;
    std::size_t violations = 0;
    double worst_excess = 0.0;  ///< max of lhs - rhs over steps
    std::size_t worst_t = 0;
    bool telescoped_passed = true;
    double min_grad_norm = 0.0;
    // Averaged conclusion.
    double averaged_value = 0.0;  ///< seed mean of (1/T) sum |grad f(xbar^t)|
    double averaged_bound = 0.0;  ///< 8 Delta_Phi / (5 eta T) + 6 eta L_f / 5
    bool averaged_passed = true;
    double delta_phi = 0.0;
    std::size_t seeds = 0;

    bool passed() const { return per_step_passed && telescoped_passed && averaged_passed; }
};

/// Deterministic mode checks Phi^{t+1} <= Phi^t - (5 eta/8)|grad f(xbar^t)| + (3/4) eta^2 L_f at
/// every step (additive tolerance) and its telescoped consequence. Both modes
/// check the averaged bound over the given runs.
DescentReport verify_descent(const std::vector<Trajectory>& runs, double eta, double l_f,
                             double f_star, bool deterministic, double tolerance = 1e-9);

struct StationaritySummary {
    double min_grad_norm = 0.0;
    double mean_grad_norm = 0.0;           ///< (1/T) sum_{t<T} |grad f(xbar^t)|
    double agent_output_grad_max = 0.0;    ///< max_i |grad f(x_i at its output index)|
    double agent_mean_grad_max = 0.0;      ///< max_i (1/T) sum_{t<T} |grad f(x_i^t)|
};

StationaritySummary stationarity_summary(const Trajectory& traj);

}  // namespace dnsgd
