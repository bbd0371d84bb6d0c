#include "dnsgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dnsgd/gossip.hpp"

namespace dnsgd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxRounds = 1000000;

/// a / b with 0 / 0 and x / 0 treated as a vacuous (+inf) bound.
double bound_ratio(double a, double b) { return b > 0.0 ? a / b : kInf; }

}  // namespace

void HyperParams::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("hyperparameters: eta must be positive");
    if (batch < 1) throw std::invalid_argument("hyperparameters: batch size must be >= 1");
    if (k_inner < 0 || k_init < 0) throw std::invalid_argument("hyperparameters: gossip rounds must be >= 0");
}

LyapunovConstants lyapunov_constants(double l0, double l1, double zeta) {
    return {std::sqrt(2.0 * (l0 * l0 + l1 * l1 * zeta * zeta)), std::sqrt(2.0) * l1};
}

double lyapunov_phi(const AgentMatrix& x, const AgentMatrix& v, const ProblemInstance& p, double eta) {
    if (x.rows() != v.rows() || x.cols() != v.cols() || x.cols() != p.dim())
        throw std::invalid_argument("lyapunov_phi: inconsistent dimensions");
    const auto [m0, m1] = lyapunov_constants(p.l0(), p.l1(), p.zeta());
    const double sqrt_m = std::sqrt(static_cast<double>(x.rows()));
    const Vector xbar = x.mean_row();
    const double gnorm = norm(p.grad(xbar));
    return p.value(xbar) + 3.0 * eta / sqrt_m * (m0 + m1 * gnorm) * x.consensus_error() +
           2.0 * eta / sqrt_m * v.consensus_error();
}

MetricsRow compute_metrics(std::size_t t, const AgentMatrix& x, const AgentMatrix& v,
                           const ProblemInstance& p, double eta, std::size_t samples,
                           std::size_t comm_rounds) {
    MetricsRow row;
    row.t = t;
    const Vector xbar = x.mean_row();
    row.f_mean = p.value(xbar);
    const double gnorm = norm(p.grad(xbar));
    row.grad_norm_mean = gnorm;
    for (std::size_t i = 0; i < x.rows(); ++i)
        row.grad_norm_agent_max = std::max(row.grad_norm_agent_max, norm(p.grad(x.row(i))));
    row.cons_x = x.consensus_error();
    row.cons_v = v.consensus_error();
    const auto [m0, m1] = lyapunov_constants(p.l0(), p.l1(), p.zeta());
    const double sqrt_m = std::sqrt(static_cast<double>(x.rows()));
    row.phi = row.f_mean + 3.0 * eta / sqrt_m * (m0 + m1 * gnorm) * row.cons_x +
              2.0 * eta / sqrt_m * row.cons_v;
    row.samples_per_agent = samples;
    row.comm_rounds = comm_rounds;
    return row;
}

RhoGuard rho_guard(double rho, double l0, double l1, double zeta, double sigma, std::size_t m,
                   double eta, std::size_t batch, double epsilon) {
    RhoGuard g;
    g.rho = rho;
    const double lf = lf_effective(l0, l1, zeta);
    const auto [m0, m1] = lyapunov_constants(l0, l1, zeta);
    const double md = static_cast<double>(m);
    const double sm = std::sqrt(md);
    g.m2 = (rho + 1.0) * lf + rho * lf * l1 * eta;
    g.m3 = rho * l1 * (l1 * eta + 1.0) + l1;
    const double shrink = 3.0 - 2.0 * std::sqrt(2.0);
    g.terms[0] = 1.0 / (1.0 + md * eta * l1);
    g.terms[1] = bound_ratio(shrink * m0, 3.0 * (m0 + m1 * lf * eta) + 2.0 * g.m2);
    g.terms[2] = bound_ratio(shrink * m1, 3.0 * m1 * (1.0 + l1 * eta) + 2.0 * g.m3);
    g.terms[3] = 0.5;
    g.terms[4] = bound_ratio(1.0, 8.0 * (3.0 * sm * eta * m1 * (1.0 + l1 * eta) + 2.0 * sm * eta * g.m3));
    g.terms[5] = bound_ratio(eta * lf, 8.0 * (3.0 * sm * eta * (m0 + m1 * lf * eta) + 2.0 * sm * eta * g.m2));
    g.required = *std::min_element(g.terms.begin(), g.terms.end());
    g.batch_ok = 2.0 * sigma / std::sqrt(md * static_cast<double>(batch)) <= eta * lf / 8.0 * (1.0 + 1e-12);
    g.ok = rho <= g.required && g.batch_ok;
    g.agent_required = epsilon / (2.0 * md * eta * lf + (md * eta * l1 + 1.0) * epsilon);
    g.agent_ok = rho <= g.agent_required;
    return g;
}

std::string to_string(KPolicy k) { return k == KPolicy::formula ? "formula" : "guard"; }

KPolicy parse_k_policy(const std::string& s) {
    if (s == "formula") return KPolicy::formula;
    if (s == "guard") return KPolicy::guard;
    throw std::invalid_argument("unknown k_policy '" + s + "' (expected formula or guard)");
}

TheoreticalParams theorem1_params(double epsilon, double l0, double l1, double zeta, double sigma,
                                  std::size_t m, double gamma, double delta_f,
                                  const TheoryOptions& opts) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("theorem1_params: epsilon must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("theorem1_params: gamma must lie in (0, 1]");
    if (!(l0 > 0.0)) throw std::invalid_argument("theorem1_params: l0 must be positive");
    if (!(l1 >= 0.0) || !(zeta >= 0.0) || !(sigma >= 0.0))
        throw std::invalid_argument("theorem1_params: l1, zeta, sigma must be non-negative");
    if (m < 1) throw std::invalid_argument("theorem1_params: m must be >= 1");
    if (!(delta_f > 0.0)) throw std::invalid_argument("theorem1_params: delta_f must be positive");

    TheoreticalParams out;
    out.k_policy = opts.k_policy;
    out.gamma = gamma;
    out.delta_f = delta_f;
    out.delta_phi = 2.0 * delta_f;
    const double lf = lf_effective(l0, l1, zeta);
    out.l_f = lf;
    const auto lc = lyapunov_constants(l0, l1, zeta);
    out.m0 = lc.m0;
    out.m1 = lc.m1;
    const double md = static_cast<double>(m);

    HyperParams& hp = out.hp;
    hp.epsilon = epsilon;
    const double eta_first = epsilon / (4.0 * lf + 1.0);
    const double eta_second = l1 > 0.0 ? 1.0 / (2.0 * l1) : kInf;
    out.eta_first_branch = eta_first <= eta_second;
    hp.eta = std::min(eta_first, eta_second);

    const double s2 = sigma * sigma;
    out.batch_terms[0] = 256.0 * (4.0 * lf + 1.0) * (4.0 * lf + 1.0) * s2 / (md * lf * lf * epsilon * epsilon);
    out.batch_terms[1] = 1024.0 * l1 * l1 * s2 / (md * lf * lf);
    hp.batch = static_cast<std::size_t>(std::max(1.0, std::ceil(std::max(out.batch_terms[0], out.batch_terms[1]))));

    out.iteration_terms[0] = 8.0 * (4.0 * lf + 1.0) * out.delta_phi / (epsilon * epsilon);
    out.iteration_terms[1] = 16.0 * l1 * out.delta_phi / epsilon;
    hp.iterations = static_cast<std::size_t>(
        std::max(1.0, std::ceil(std::max(out.iteration_terms[0], out.iteration_terms[1]))));
    if (opts.t_cap && hp.iterations > *opts.t_cap) {
        hp.iterations = *opts.t_cap;
        out.t_capped = true;
    }

    const double sqrt_gamma = std::sqrt(gamma);
    const double lambda2 = 1.0 - gamma;
    out.k_formula = static_cast<int>(std::ceil(opts.c_k * std::log(std::max(md, 2.0)) / sqrt_gamma));
    // The tracker recursion additionally asks for K >= log(1 + m eta L1) / sqrt(gamma).
    const int k_tracker = static_cast<int>(std::ceil(std::log(1.0 + md * hp.eta * l1) / sqrt_gamma));
    out.k_guard = -1;
    for (int k = 0; k <= kMaxRounds; ++k) {
        const RhoGuard g = rho_guard(contraction_rho(lambda2, k), l0, l1, zeta, sigma, m, hp.eta,
                                     hp.batch, epsilon);
        if (g.rho <= g.required && g.agent_ok && k >= k_tracker) {
            out.k_guard = k;
            break;
        }
    }
    if (out.k_guard < 0) throw std::runtime_error("theorem1_params: no gossip round count satisfies the rho conditions");
    hp.k_inner = opts.k_policy == KPolicy::guard ? std::max(out.k_formula, out.k_guard) : out.k_formula;

    // Initial tracker consensus: need rho_hat <= sqrt(m) Delta_f / (2 sqrt(2) eta sqrt(m sigma^2/b + S)).
    const double spread = std::sqrt(md * s2 / static_cast<double>(hp.batch) + opts.grad_sq_sum_x0);
    const double target = spread > 0.0 ? std::sqrt(md) * delta_f / (2.0 * std::sqrt(2.0) * hp.eta * spread) : kInf;
    const double log_arg = spread > 0.0 ? 1.0 / target : 0.0;
    out.k_init_formula = log_arg > 1.0 ? static_cast<int>(std::ceil(opts.c_k_init / sqrt_gamma * std::log(log_arg))) : 1;
    out.k_init_formula = std::max(1, out.k_init_formula);
    out.k_init_guard = 1;
    while (out.k_init_guard < kMaxRounds && contraction_rho(lambda2, out.k_init_guard) > target) ++out.k_init_guard;
    hp.k_init = opts.k_policy == KPolicy::guard ? std::max(out.k_init_formula, out.k_init_guard) : out.k_init_formula;

    const RhoGuard g = rho_guard(contraction_rho(lambda2, hp.k_inner), l0, l1, zeta, sigma, m, hp.eta,
                                 hp.batch, epsilon);
    out.rho = g.rho;
    out.m2 = g.m2;
    out.m3 = g.m3;
    out.rho_required = g.required;
    out.rho_agent_required = g.agent_required;
    out.guard_ok = g.ok;
    out.agent_guard_ok = g.agent_ok;
    return out;
}

std::string TheoreticalParams::describe() const {
    std::ostringstream os;
    os.precision(10);
    os << "theoretical parameters\n";
    os << "  L_f        = " << l_f << '\n';
    os << "  M0, M1     = " << m0 << ", " << m1 << '\n';
    os << "  M2, M3     = " << m2 << ", " << m3 << '\n';
    os << "  Delta_f    = " << delta_f << "  (Delta_Phi = " << delta_phi << ")\n";
    os << "  gamma      = " << gamma << '\n';
    os << "  eta        = " << hp.eta << "  ["
       << (eta_first_branch ? "eps/(4L_f+1) branch" : "1/(2L1) branch") << "]\n";
    os << "  b          = " << hp.batch << "  (terms " << batch_terms[0] << ", " << batch_terms[1] << ")\n";
    os << "  T          = " << hp.iterations << "  (terms " << iteration_terms[0] << ", " << iteration_terms[1]
       << (t_capped ? "; capped" : "") << ")\n";
    os << "  K          = " << hp.k_inner << "  (formula " << k_formula << ", guard " << k_guard << ", policy "
       << to_string(k_policy) << ")\n";
    os << "  K_init     = " << hp.k_init << "  (formula " << k_init_formula << ", guard " << k_init_guard << ")\n";
    os << "  rho        = " << rho << '\n';
    os << "  rho guard  = " << rho_required << "  [" << (guard_ok ? "ok" : "NOT MET") << "]\n";
    os << "  agent guard= " << rho_agent_required << "  [" << (agent_guard_ok ? "ok" : "NOT MET") << "]\n";
    return os.str();
}

VerificationReport verify_lemma2(const Trajectory& traj, double rho, std::size_t m, double eta) {
    VerificationReport r;
    if (!(rho < 1.0)) {
        r.applicable = false;
        r.note = "rho >= 1: consensus bound is vacuous";
        return r;
    }
    r.bound = rho * static_cast<double>(m) * eta / (1.0 - rho);
    r.worst_slack = kInf;
    for (const MetricsRow& row : traj.rows) {
        if (row.t == 0) continue;
        if (r.worst_t == 0 || row.cons_x > r.worst_value) {
            r.worst_value = row.cons_x;
            r.worst_t = row.t;
        }
        r.worst_slack = std::min(r.worst_slack, r.bound - row.cons_x);
        if (row.cons_x > r.bound) ++r.violations;
    }
    if (r.worst_slack == kInf) r.worst_slack = r.bound;
    r.passed = r.violations == 0;
    return r;
}

DescentReport verify_descent(const std::vector<Trajectory>& runs, double eta, double l_f, double f_star,
                             bool deterministic, double tolerance) {
    DescentReport r;
    r.deterministic = deterministic;
    r.seeds = runs.size();
    if (runs.empty()) return r;
    double phi0 = 0.0;
    double avg = 0.0;
    double horizon = 0.0;
    r.min_grad_norm = kInf;
    bool any_step = false;
    for (const Trajectory& traj : runs) {
        const auto& rows = traj.rows;
        const std::size_t T = traj.iterations();
        if (T == 0) continue;
        phi0 += rows.front().phi;
        double sum = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            sum += rows[t].grad_norm_mean;
            r.min_grad_norm = std::min(r.min_grad_norm, rows[t].grad_norm_mean);
            if (deterministic) {
                const double rhs = rows[t].phi - 5.0 * eta / 8.0 * rows[t].grad_norm_mean + 0.75 * eta * eta * l_f;
                const double excess = rows[t + 1].phi - rhs;
                if (!any_step || excess > r.worst_excess) {
                    r.worst_excess = excess;
                    r.worst_t = t;
                    any_step = true;
                }
                if (excess > tolerance) ++r.violations;
            }
        }
        avg += sum / static_cast<double>(T);
        horizon += static_cast<double>(T);
    }
    const double n = static_cast<double>(runs.size());
    r.delta_phi = phi0 / n - f_star;
    r.averaged_value = avg / n;
    const double mean_T = horizon / n;
    r.averaged_bound = 8.0 * r.delta_phi / (5.0 * eta * mean_T) + 6.0 * eta * l_f / 5.0;
    r.averaged_passed = r.averaged_value <= r.averaged_bound;
    if (deterministic) {
        r.per_step_passed = r.violations == 0;
        r.telescoped_passed = r.min_grad_norm <= r.averaged_bound;
    }
    return r;
}

StationaritySummary stationarity_summary(const Trajectory& traj) {
    StationaritySummary s;
    const std::size_t T = traj.iterations();
    const std::size_t n = std::max<std::size_t>(T, 1);
    s.min_grad_norm = kInf;
    double sum = 0.0;
    for (std::size_t t = 0; t < n && t < traj.rows.size(); ++t) {
        sum += traj.rows[t].grad_norm_mean;
        s.min_grad_norm = std::min(s.min_grad_norm, traj.rows[t].grad_norm_mean);
    }
    s.mean_grad_norm = sum / static_cast<double>(n);
    for (double g : traj.output_grad_norm)
        if (!std::isnan(g)) s.agent_output_grad_max = std::max(s.agent_output_grad_max, g);
    for (double g : traj.agent_grad_norm_mean) s.agent_mean_grad_max = std::max(s.agent_mean_grad_max, g);
    return s;
}

}  // namespace dnsgd
