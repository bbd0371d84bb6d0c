#include "dnsgd/topology.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include "dnsgd/rng.hpp"

namespace dnsgd {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kSymmetryTol = 1e-12;
constexpr double kEigenTol = 1e-10;

}  // namespace

std::string to_string(TopologyKind k) {
    switch (k) {
        case TopologyKind::ring: return "ring";
        case TopologyKind::erdos_renyi: return "erdos_renyi";
        case TopologyKind::complete: return "complete";
        case TopologyKind::path: return "path";
    }
    return "unknown";
}

TopologyKind parse_topology_kind(const std::string& s) {
    if (s == "ring") return TopologyKind::ring;
    if (s == "erdos_renyi" || s == "er") return TopologyKind::erdos_renyi;
    if (s == "complete") return TopologyKind::complete;
    if (s == "path") return TopologyKind::path;
    throw std::invalid_argument("unknown topology kind '" + s + "'");
}

Graph::Graph(std::size_t m, std::vector<std::pair<std::size_t, std::size_t>> edges, TopologyKind kind,
             std::optional<double> p)
    : m_(m), adj_(m, std::vector<bool>(m, false)), kind_(kind), p_(p) {
    for (auto [i, j] : edges) {
        if (i >= m || j >= m) throw std::invalid_argument("Graph: edge endpoint out of range");
        if (i == j) throw std::invalid_argument("Graph: self-loop edges are not stored");
        if (i > j) std::swap(i, j);
        if (adj_[i][j]) continue;
        adj_[i][j] = adj_[j][i] = true;
        edges_.emplace_back(i, j);
    }
    std::sort(edges_.begin(), edges_.end());
}

bool Graph::has_edge(std::size_t i, std::size_t j) const { return adj_[i][j]; }

std::vector<std::size_t> Graph::degrees() const {
    std::vector<std::size_t> deg(m_, 0);
    for (auto [i, j] : edges_) {
        ++deg[i];
        ++deg[j];
    }
    return deg;
}

bool Graph::connected() const {
    if (m_ == 0) return false;
    std::vector<bool> seen(m_, false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!frontier.empty()) {
        const std::size_t u = frontier.front();
        frontier.pop();
        for (std::size_t v = 0; v < m_; ++v) {
            if (adj_[u][v] && !seen[v]) {
                seen[v] = true;
                ++count;
                frontier.push(v);
            }
        }
    }
    return count == m_;
}

Graph build_topology(TopologyKind kind, std::size_t m, const TopologyOptions& opts) {
    if (m == 0) throw std::invalid_argument("build_topology: agent count must be positive");
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    switch (kind) {
        case TopologyKind::ring:
            if (opts.p) throw std::invalid_argument("build_topology: p is only valid for erdos_renyi");
            for (std::size_t i = 0; i + 1 < m; ++i) edges.emplace_back(i, i + 1);
            if (m > 2) edges.emplace_back(m - 1, 0);
            return Graph(m, std::move(edges), kind);
        case TopologyKind::path:
            if (opts.p) throw std::invalid_argument("build_topology: p is only valid for erdos_renyi");
            for (std::size_t i = 0; i + 1 < m; ++i) edges.emplace_back(i, i + 1);
            return Graph(m, std::move(edges), kind);
        case TopologyKind::complete:
            if (opts.p) throw std::invalid_argument("build_topology: p is only valid for erdos_renyi");
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = i + 1; j < m; ++j) edges.emplace_back(i, j);
            return Graph(m, std::move(edges), kind);
        case TopologyKind::erdos_renyi: {
            if (!opts.p || !(*opts.p > 0.0 && *opts.p <= 1.0))
                throw std::invalid_argument("build_topology: erdos_renyi requires p in (0, 1]");
            const int attempts = std::max(1, opts.max_retries);
            for (int attempt = 0; attempt < attempts; ++attempt) {
                Stream rng = derive_stream({opts.seed, StreamPurpose::topology, m,
                                            static_cast<std::uint64_t>(attempt)});
                edges.clear();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = i + 1; j < m; ++j)
                        if (rng.uniform() < *opts.p) edges.emplace_back(i, j);
                Graph g(m, edges, kind, opts.p);
                if (g.connected()) return g;
            }
            std::ostringstream msg;
            msg << "disconnected topology: erdos_renyi(m=" << m << ", p=" << *opts.p
                << ") stayed disconnected after " << attempts << " draws";
            throw DisconnectedTopology(msg.str());
        }
    }
    throw std::invalid_argument("build_topology: unknown kind");
}

MixingMatrix::MixingMatrix(Graph graph, std::vector<double> weights)
    : graph_(std::move(graph)), w_(std::move(weights)) {
    const std::size_t m = graph_.size();
    if (w_.size() != m * m) throw std::invalid_argument("MixingMatrix: weights must be m*m");
    Eigen::MatrixXd sym(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) sym(i, j) = 0.5 * (w_[i * m + j] + w_[j * m + i]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& ev = solver.eigenvalues();  // ascending
    eig_.assign(ev.data(), ev.data() + ev.size());
    std::reverse(eig_.begin(), eig_.end());
    lambda2_ = m >= 2 ? eig_[1] : 0.0;
}

void MixingMatrix::apply(const AgentMatrix& in, AgentMatrix& out) const {
    const std::size_t m = size();
    if (in.rows() != m) throw std::invalid_argument("MixingMatrix::apply: row count must equal m");
    const std::size_t d = in.cols();
    if (out.rows() != m || out.cols() != d) out = AgentMatrix(m, d);
    for (std::size_t i = 0; i < m; ++i) {
        std::span<double> dst = out.row(i);
        std::fill(dst.begin(), dst.end(), 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double wij = w_[i * m + j];
            if (wij == 0.0) continue;
            std::span<const double> src = in.row(j);
            for (std::size_t c = 0; c < d; ++c) dst[c] += wij * src[c];
        }
    }
}

MixingMatrix metropolis_mixing(const Graph& g) {
    if (!g.connected()) throw std::invalid_argument("metropolis_mixing: graph must be connected");
    const std::size_t m = g.size();
    const auto deg = g.degrees();
    std::vector<double> base(m * m, 0.0);
    for (auto [i, j] : g.edges()) {
        const double w = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
        base[i * m + j] = w;
        base[j * m + i] = w;
    }
    for (std::size_t i = 0; i < m; ++i) {
        double off = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) off += base[i * m + j];
        base[i * m + i] = 1.0 - off;
    }
    std::vector<double> lazy(m * m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            lazy[i * m + j] = 0.5 * ((i == j ? 1.0 : 0.0) + base[i * m + j]);
    // Both triangles are written from the same expression, so symmetry is exact.
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) lazy[j * m + i] = lazy[i * m + j];
    return MixingMatrix(g, std::move(lazy));
}

ValidationReport validate_mixing(const MixingMatrix& w) {
    ValidationReport r;
    const std::size_t m = w.size();
    const Graph& g = w.graph();
    r.min_entry = m ? w(0, 0) : 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        double col = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            row += w(i, j);
            col += w(j, i);
            r.max_asymmetry = std::max(r.max_asymmetry, std::abs(w(i, j) - w(j, i)));
            r.min_entry = std::min(r.min_entry, w(i, j));
            const bool expect_nonzero = (i == j) || g.has_edge(i, j);
            if (expect_nonzero != (w(i, j) != 0.0)) ++r.pattern_mismatches;
        }
        r.max_row_sum_error = std::max(r.max_row_sum_error, std::abs(row - 1.0));
        r.max_col_sum_error = std::max(r.max_col_sum_error, std::abs(col - 1.0));
    }
    const auto& eig = w.eigenvalues();
    r.max_eigenvalue = eig.empty() ? 0.0 : eig.front();
    r.min_eigenvalue = eig.empty() ? 0.0 : eig.back();
    for (double lam : eig)
        if (std::abs(1.0 - lam) <= kEigenTol) ++r.null_space_dim;

    r.symmetric = r.max_asymmetry <= kSymmetryTol;
    r.nonnegative = r.min_entry >= 0.0;
    r.sparsity_matches = r.pattern_mismatches == 0;
    r.doubly_stochastic = r.max_row_sum_error <= kStochasticTol && r.max_col_sum_error <= kStochasticTol;
    r.eigen_range = r.min_eigenvalue >= -kEigenTol && r.max_eigenvalue <= 1.0 + kEigenTol;
    r.null_space_one = r.null_space_dim == 1;
    return r;
}

std::string ValidationReport::describe() const {
    std::ostringstream os;
    auto line = [&os](const char* name, bool ok, const std::string& detail) {
        os << (ok ? "  [ok]   " : "  [FAIL] ") << name << "  " << detail << '\n';
    };
    line("symmetric", symmetric, "max|W-W^T| = " + std::to_string(max_asymmetry));
    line("nonnegative", nonnegative, "min entry = " + std::to_string(min_entry));
    line("sparsity pattern", sparsity_matches, std::to_string(pattern_mismatches) + " mismatches");
    {
        std::ostringstream d;
        d << "max row err = " << max_row_sum_error << ", max col err = " << max_col_sum_error;
        line("doubly stochastic", doubly_stochastic, d.str());
    }
    {
        std::ostringstream d;
        d << "eigenvalues in [" << min_eigenvalue << ", " << max_eigenvalue << "]";
        line("0 <= W <= I", eigen_range, d.str());
    }
    line("null(I-W) = span(1)", null_space_one, "dim = " + std::to_string(null_space_dim));
    return os.str();
}

}  // namespace dnsgd
