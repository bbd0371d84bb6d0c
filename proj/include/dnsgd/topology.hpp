#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dnsgd/agent_matrix.hpp"

namespace dnsgd {

enum class TopologyKind { ring, erdos_renyi, complete, path };

std::string to_string(TopologyKind k);
TopologyKind parse_topology_kind(const std::string& s);

/// Thrown when an Erdos-Renyi draw stays disconnected after the retry budget.
class DisconnectedTopology : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Undirected simple graph on agents 0..m-1. Edges are stored as (i, j) with
/// i < j, sorted, without duplicates or self-loops.
class Graph {
public:
    Graph(std::size_t m, std::vector<std::pair<std::size_t, std::size_t>> edges, TopologyKind kind,
          std::optional<double> p = std::nullopt);

    std::size_t size() const { return m_; }
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
    TopologyKind kind() const { return kind_; }
    std::optional<double> probability() const { return p_; }

    bool has_edge(std::size_t i, std::size_t j) const;
    std::vector<std::size_t> degrees() const;
    /// Breadth-first search from agent 0.
    bool connected() const;

private:
    std::size_t m_;
    std::vector<std::pair<std::size_t, std::size_t>> edges_;
    std::vector<std::vector<bool>> adj_;
    TopologyKind kind_;
    std::optional<double> p_;
};

struct TopologyOptions {
    std::optional<double> p;
    std::uint64_t seed = 0;
    int max_retries = 100;
};

Graph build_topology(TopologyKind kind, std::size_t m, const TopologyOptions& opts = {});

/// Symmetric mixing matrix together with its graph and cached spectrum.
/// Construction does not validate; see validate_mixing.
class MixingMatrix {
public:
    /// `weights` is m*m row-major.
    MixingMatrix(Graph graph, std::vector<double> weights);

    std::size_t size() const { return graph_.size(); }
    const Graph& graph() const { return graph_; }
    double operator()(std::size_t i, std::size_t j) const { return w_[i * size() + j]; }
    const std::vector<double>& weights() const { return w_; }

    /// Eigenvalues of the symmetric part, descending.
    const std::vector<double>& eigenvalues() const { return eig_; }
    /// Second-largest eigenvalue; 0 for a single agent.
    double lambda2() const { return lambda2_; }
    double gamma() const { return 1.0 - lambda2_; }

    /// out = W * in, one row at a time with a fixed summation order.
    void apply(const AgentMatrix& in, AgentMatrix& out) const;

private:
    Graph graph_;
    std::vector<double> w_;
    std::vector<double> eig_;
    double lambda2_ = 0.0;
};

/// Lazy Metropolis weights: W = (I + W')/2 with
/// W'_ij = 1/(1 + max(deg_i, deg_j)) on edges.
MixingMatrix metropolis_mixing(const Graph& g);

struct ValidationReport {
    bool symmetric = false;
    bool nonnegative = false;
    bool sparsity_matches = false;
    bool doubly_stochastic = false;
    bool eigen_range = false;
    bool null_space_one = false;

    double max_asymmetry = 0.0;
    double min_entry = 0.0;
    std::size_t pattern_mismatches = 0;
    double max_row_sum_error = 0.0;
    double max_col_sum_error = 0.0;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    std::size_t null_space_dim = 0;

    bool all_passed() const {
        return symmetric && nonnegative && sparsity_matches && doubly_stochastic && eigen_range &&
               null_space_one;
    }
    std::string describe() const;
};

ValidationReport validate_mixing(const MixingMatrix& w);

}  // namespace dnsgd
