#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dnsgd/agent_matrix.hpp"

namespace dnsgd {

/// Per-iteration diagnostics. Column order of the metrics CSV follows the
/// field order here.
struct MetricsRow {
    std::size_t t = 0;
    double f_mean = 0.0;               ///< f(xbar)
    double grad_norm_mean = 0.0;       ///< |grad f(xbar)|
    double grad_norm_agent_max = 0.0;  ///< max_i |grad f(x_i)|
    double cons_x = 0.0;               ///< |X - 1 xbar|_F
    double cons_v = 0.0;               ///< |V - 1 vbar|_F
    double phi = 0.0;                  ///< Lyapunov value
    std::size_t samples_per_agent = 0;
    std::size_t comm_rounds = 0;
};

struct Snapshot {
    std::size_t t = 0;
    AgentMatrix x;
};

/// Checks evaluated online while a run progresses, before iterates are
/// discarded.
struct OnlineChecks {
    /// max_t |vbar - gbar|_inf / max(1, |gbar|_inf); only meaningful for
    /// tracking methods.
    double tracker_violation = 0.0;
    /// max_t |xbar' - xbar + eta * mean(U)|_inf (normalized methods).
    double mean_iterate_violation = 0.0;
    /// max_t |xbar' - xbar| / eta.
    double max_step_ratio = 0.0;
    /// Recorded iterations with some agent outside the certification box.
    std::size_t box_exits = 0;
};

struct Trajectory {
    std::string algorithm;
    std::vector<MetricsRow> rows;
    std::vector<Snapshot> snapshots;
    OnlineChecks checks;
    /// Output index per agent, uniform over {0, ..., T-1}.
    std::vector<std::size_t> output_index;
    /// |grad f(x_i^{output_index[i]})|; NaN if the run stopped before it.
    std::vector<double> output_grad_norm;
    std::vector<Vector> output_iterate;
    /// (1/T) sum_{t<T} |grad f(x_i^t)| per agent.
    std::vector<double> agent_grad_norm_mean;
    bool stopped_early = false;

    /// Number of completed iterations.
    std::size_t iterations() const { return rows.empty() ? 0 : rows.size() - 1; }
};

}  // namespace dnsgd
