#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "dnsgd/agent_matrix.hpp"
#include "dnsgd/analysis.hpp"
#include "dnsgd/metrics.hpp"
#include "dnsgd/problems.hpp"
#include "dnsgd/rng.hpp"
#include "dnsgd/topology.hpp"

namespace dnsgd {

enum class Algorithm { dnsgd, dsgd, dsgt, dnasa };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

/// Step size rule for D-NASA. `decaying`: min(eta, m^{1/4} / t^{3/4});
/// `literal`: min(eta, m^{1/4} t^{3/4}), which saturates at eta.
enum class DnasaSchedule { decaying, literal };

std::string to_string(DnasaSchedule s);
DnasaSchedule parse_dnasa_schedule(const std::string& s);

struct OptimizerState {
    AgentMatrix x;       ///< X^t
    AgentMatrix v;       ///< tracker V^t (the last gradients for D-SGD)
    AgentMatrix g_prev;  ///< G^t
    std::size_t t = 0;
    std::size_t samples_per_agent = 0;
    std::size_t comm_rounds = 0;
};

/// Oracle randomness for one run. Agent i at iteration t always reads the
/// stream keyed (master, oracle, i, t).
struct OracleStreams {
    std::uint64_t master_seed = 0;
    Stream stream(std::size_t agent, std::size_t iteration) const {
        return derive_stream({master_seed, StreamPurpose::oracle, agent, iteration});
    }
};

class NonFiniteState : public std::runtime_error {
public:
    NonFiniteState(std::size_t iteration, std::size_t agent, const std::string& what);
    std::size_t iteration() const { return iteration_; }
    std::size_t agent() const { return agent_; }

private:
    std::size_t iteration_;
    std::size_t agent_;
};

/// Row i becomes v_i / |v_i|, or zero when |v_i| <= eps_norm.
AgentMatrix normalize_rows(const AgentMatrix& v, double eps_norm = 1e-12);

/// One minibatch gradient per agent at its own row of x, drawn from the
/// streams for `iteration`.
AgentMatrix sample_gradients(const ProblemInstance& p, const AgentMatrix& x, std::size_t batch,
                             const OracleStreams& streams, std::size_t iteration);

OptimizerState dnsgd_init(const ProblemInstance& p, std::span<const double> x0, const HyperParams& hp,
                          const MixingMatrix& w, const OracleStreams& streams);
OptimizerState dnsgd_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                          const MixingMatrix& w, const OracleStreams& streams, double eps_norm = 1e-12);

/// Initial state shared by the baselines: X^0 = 1 x0, V^0 = G^0, no communication.
OptimizerState baseline_init(const ProblemInstance& p, std::span<const double> x0, const HyperParams& hp,
                             const MixingMatrix& w, const OracleStreams& streams);
/// X' = W (X - eta G); one round.
OptimizerState dsgd_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                         const MixingMatrix& w, const OracleStreams& streams);
/// X' = W (X - eta V), V' = W V + G' - G; two rounds.
OptimizerState dsgt_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                         const MixingMatrix& w, const OracleStreams& streams);
/// D-SGT with normalized per-agent directions and a scheduled step size.
OptimizerState dnasa_step(const OptimizerState& s, const ProblemInstance& p, const HyperParams& hp,
                          const MixingMatrix& w, const OracleStreams& streams,
                          DnasaSchedule schedule = DnasaSchedule::decaying, double eps_norm = 1e-12);

/// Step size used by dnasa_step when moving from iteration t to t + 1.
double dnasa_step_size(double eta_max, std::size_t m, std::size_t t, DnasaSchedule schedule);

struct RunOptions {
    /// Keep X^t every this many iterations (and the last); 0 keeps none.
    std::size_t snapshot_every = 10;
    /// Stop after the first recorded t with |grad f(xbar^t)| <= this.
    std::optional<double> stop_at_grad_norm;
    DnasaSchedule schedule = DnasaSchedule::decaying;
    double eps_norm = 1e-12;
};

/// Runs hp.iterations steps from X^0 = 1 x0 and records one MetricsRow per
/// iterate. Output indices are drawn from (master, output_draw, i, 0).
Trajectory run(Algorithm algorithm, const ProblemInstance& p, const HyperParams& hp, const MixingMatrix& w,
               std::span<const double> x0, std::uint64_t master_seed, const RunOptions& opts = {});

}  // namespace dnsgd
