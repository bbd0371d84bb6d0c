#include "dnsgd/gossip.hpp"

#include <cmath>
#include <stdexcept>

namespace dnsgd {

namespace {

void check_inputs(const AgentMatrix& y0, const MixingMatrix& w, int rounds, const char* who) {
    if (y0.rows() != w.size())
        throw std::invalid_argument(std::string(who) + ": input has " + std::to_string(y0.rows()) +
                                    " rows but the mixing matrix has " + std::to_string(w.size()) +
                                    " agents");
    if (rounds < 0) throw std::invalid_argument(std::string(who) + ": rounds must be non-negative");
    y0.require_finite(who);
}

}  // namespace

double chebyshev_momentum(double lambda2) {
    const double s = std::sqrt(1.0 - lambda2 * lambda2);
    return (1.0 - s) / (1.0 + s);
}

AgentMatrix acc_gossip(const AgentMatrix& y0, const MixingMatrix& w, int rounds) {
    check_inputs(y0, w, rounds, "acc_gossip");
    const double eta_y = chebyshev_momentum(w.lambda2());
    AgentMatrix prev = y0;
    AgentMatrix cur = y0;
    AgentMatrix mixed(y0.rows(), y0.cols());
    const auto data_size = cur.data().size();
    for (int k = 0; k <= rounds; ++k) {
        w.apply(cur, mixed);
        auto next = mixed.data();
        auto old = prev.data();
        for (std::size_t n = 0; n < data_size; ++n) next[n] = (1.0 + eta_y) * next[n] - eta_y * old[n];
        std::swap(prev, cur);
        std::swap(cur, mixed);
    }
    return cur;
}

AgentMatrix plain_gossip(const AgentMatrix& y0, const MixingMatrix& w, int rounds) {
    check_inputs(y0, w, rounds, "plain_gossip");
    AgentMatrix cur = y0;
    AgentMatrix next(y0.rows(), y0.cols());
    for (int k = 0; k < rounds; ++k) {
        w.apply(cur, next);
        std::swap(cur, next);
    }
    return cur;
}

double contraction_rho(double lambda2, int rounds) {
    if (!(lambda2 >= 0.0 && lambda2 < 1.0))
        throw std::invalid_argument("contraction_rho: lambda2 must lie in [0, 1)");
    if (rounds < 0) throw std::invalid_argument("contraction_rho: rounds must be non-negative");
    const double c1 = std::sqrt(14.0);
    const double c2 = 1.0 - 1.0 / std::sqrt(2.0);
    return c1 * std::pow(1.0 - c2 * std::sqrt(1.0 - lambda2), rounds);
}

}  // namespace dnsgd
