#include "dnsgd/agent_matrix.hpp"

#include "dnsgd/rng.hpp"

namespace dnsgd {

std::string_view to_string(StreamPurpose p) {
    switch (p) {
        case StreamPurpose::oracle: return "oracle";
        case StreamPurpose::topology: return "topology";
        case StreamPurpose::output_draw: return "output_draw";
        case StreamPurpose::offsets: return "offsets";
        case StreamPurpose::seed_fanout: return "seed_fanout";
        case StreamPurpose::certification: return "certification";
        case StreamPurpose::input: return "input";
    }
    return "unknown";
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

AgentMatrix AgentMatrix::broadcast(std::size_t rows, std::span<const double> row) {
    AgentMatrix m(rows, row.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < row.size(); ++j) m(i, j) = row[j];
    return m;
}

Vector AgentMatrix::mean_row() const {
    Vector mean(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) mean[j] += (*this)(i, j);
    for (double& v : mean) v /= static_cast<double>(rows_);
    return mean;
}

double AgentMatrix::frobenius_norm() const { return norm(data_); }

double AgentMatrix::consensus_error() const {
    const Vector mean = mean_row();
    double s = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) {
            const double d = (*this)(i, j) - mean[j];
            s += d * d;
        }
    return std::sqrt(s);
}

bool AgentMatrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void AgentMatrix::require_finite(const std::string& what) const {
    for (std::size_t k = 0; k < data_.size(); ++k) {
        if (!std::isfinite(data_[k])) {
            throw std::domain_error(what + ": non-finite entry at agent " + std::to_string(k / cols_) +
                                    ", coordinate " + std::to_string(k % cols_));
        }
    }
}

void AgentMatrix::require_same_shape(const AgentMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
        throw std::invalid_argument("AgentMatrix: dimension mismatch");
}

AgentMatrix& AgentMatrix::operator+=(const AgentMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
}

AgentMatrix& AgentMatrix::operator-=(const AgentMatrix& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
}

AgentMatrix& AgentMatrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

}  // namespace dnsgd
