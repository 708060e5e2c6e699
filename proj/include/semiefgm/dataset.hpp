#pragma once

#include "errors.hpp"
#include "linalg.hpp"

#include <cmath>
#include <span>
#include <string>

namespace semiefgm {

/// n samples of p variates; every variate is a length-d real vector
/// (d = 1 for scalar data). Sample rows are stored contiguously.
class Dataset {
public:
    using Storage = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    Dataset() = default;

    Dataset(Index n, Index p, Index feature_dim = 1)
        : values_(Storage::Zero(n, p * feature_dim)), p_(p), d_(feature_dim)
    {
        detail::require(n >= 1, "Dataset: need at least one sample");
        detail::require(p >= 2, "Dataset: need at least two variates");
        detail::require(feature_dim >= 1, "Dataset: feature_dim must be positive");
    }

    /// Wraps an n x p matrix of scalar variates.
    static Dataset from_scalar(const Matrix& x)
    {
        Dataset out(x.rows(), x.cols(), 1);
        out.values_ = x;
        return out;
    }

    /// Wraps an n x (p*d) matrix whose columns are grouped per variate.
    static Dataset from_values(const Matrix& x, Index feature_dim)
    {
        detail::require(feature_dim >= 1 && x.cols() % feature_dim == 0,
                        "Dataset: column count is not a multiple of feature_dim");
        Dataset out(x.rows(), x.cols() / feature_dim, feature_dim);
        out.values_ = x;
        return out;
    }

    Index n() const { return values_.rows(); }
    Index p() const { return p_; }
    Index feature_dim() const { return d_; }
    bool is_scalar() const { return d_ == 1; }
    bool empty() const { return values_.rows() == 0; }

    std::span<const double> variate(Index i, Index s) const
    {
        return {values_.data() + i * values_.cols() + s * d_, static_cast<std::size_t>(d_)};
    }

    std::span<double> variate(Index i, Index s)
    {
        return {values_.data() + i * values_.cols() + s * d_, static_cast<std::size_t>(d_)};
    }

    double scalar(Index i, Index s) const { return values_(i, s); }
    double& scalar(Index i, Index s) { return values_(i, s); }

    /// Sample row i as a contiguous span of p*d values.
    std::span<const double> row(Index i) const
    {
        return {values_.data() + i * values_.cols(), static_cast<std::size_t>(values_.cols())};
    }

    const Storage& values() const { return values_; }

    /// Scalar data as an ordinary n x p matrix.
    Matrix scalar_matrix() const
    {
        detail::require(is_scalar(), "Dataset: scalar view requested on vector-valued data");
        return values_;
    }

    Dataset concat(const Dataset& other) const
    {
        detail::require(other.p_ == p_ && other.d_ == d_, "Dataset: concat shape mismatch");
        Storage joined(n() + other.n(), values_.cols());
        joined << values_, other.values_;
        Dataset out;
        out.values_ = std::move(joined);
        out.p_ = p_;
        out.d_ = d_;
        return out;
    }

    /// First `count` samples.
    Dataset head(Index count) const
    {
        detail::require(count >= 1 && count <= n(), "Dataset: head count out of range");
        Dataset out;
        out.values_ = values_.topRows(count);
        out.p_ = p_;
        out.d_ = d_;
        return out;
    }

    /// Throws unless every variate has Euclidean norm 1 within tol.
    void require_unit_norm(double tol = 1e-9) const
    {
        for (Index i = 0; i < n(); ++i)
            for (Index s = 0; s < p_; ++s) {
                double sq = 0.0;
                for (double v : variate(i, s)) sq += v * v;
                if (std::abs(std::sqrt(sq) - 1.0) > tol)
                    throw InvalidInput("Dataset: variate (" + std::to_string(i) + ", " + std::to_string(s) +
                                       ") is not unit length");
            }
    }

private:
    Storage values_;
    Index p_ = 0;
    Index d_ = 1;
};

} // namespace semiefgm
