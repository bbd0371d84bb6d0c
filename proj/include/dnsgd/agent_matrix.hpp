#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dnsgd {

using Vector = std::vector<double>;

double norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

/// Row-stacked local vectors: row i belongs to agent i. Dense, row-major.
class AgentMatrix {
public:
    AgentMatrix() = default;
    AgentMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    /// Every row equal to `row`.
    static AgentMatrix broadcast(std::size_t rows, std::span<const double> row);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    /// Column means, i.e. (1/m) 1^T M.
    Vector mean_row() const;
    double frobenius_norm() const;
    /// ||M - 1 mbar||_F.
    double consensus_error() const;
    bool all_finite() const;

    /// Throws std::domain_error naming `what` and the first bad entry.
    void require_finite(const std::string& what) const;

    AgentMatrix& operator+=(const AgentMatrix& o);
    AgentMatrix& operator-=(const AgentMatrix& o);
    AgentMatrix& operator*=(double s);

    friend AgentMatrix operator+(AgentMatrix a, const AgentMatrix& b) { return a += b; }
    friend AgentMatrix operator-(AgentMatrix a, const AgentMatrix& b) { return a -= b; }
    friend AgentMatrix operator*(double s, AgentMatrix a) { return a *= s; }

    friend bool operator==(const AgentMatrix&, const AgentMatrix&) = default;

private:
    void require_same_shape(const AgentMatrix& o) const;

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace dnsgd
