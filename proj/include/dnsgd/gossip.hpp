#pragma once

#include "dnsgd/agent_matrix.hpp"
#include "dnsgd/topology.hpp"

namespace dnsgd {

/// Momentum coefficient of the Chebyshev recursion:
/// (1 - sqrt(1 - lambda2^2)) / (1 + sqrt(1 - lambda2^2)).
double chebyshev_momentum(double lambda2);

/// Chebyshev-accelerated multi-round gossip.
///
/// Runs Y(k+1) = (1 + eta_y) W Y(k) - eta_y Y(k-1) with Y(-1) = Y(0) for
/// k = 0, 1, ..., rounds, i.e. `rounds + 1` multiplications by W, and returns
/// the last iterate. `rounds = 0` therefore still mixes once. Column means of
/// the input are preserved.
AgentMatrix acc_gossip(const AgentMatrix& y0, const MixingMatrix& w, int rounds);

/// W^rounds * y0.
AgentMatrix plain_gossip(const AgentMatrix& y0, const MixingMatrix& w, int rounds);

/// Contraction factor sqrt(14) * (1 - (1 - 1/sqrt(2)) sqrt(1 - lambda2))^rounds
/// bounding ||Y_out - 1 ybar|| / ||Y_in - 1 ybar|| for acc_gossip.
double contraction_rho(double lambda2, int rounds);

}  // namespace dnsgd
