#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace semiefgm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Smallest eigenvalue of the symmetric part of a square matrix.
inline double min_eigenvalue(const Matrix& a)
{
    if (a.rows() == 0) return 0.0;
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

inline constexpr double kPsdTolerance = 1e-8;

inline bool is_psd(const Matrix& a, double tol = kPsdTolerance)
{
    return min_eigenvalue(a) >= -tol;
}

inline double symmetry_error(const Matrix& a)
{
    return (a - a.transpose()).cwiseAbs().maxCoeff();
}

inline double soft_threshold(double z, double t)
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

/// Numerically stable log(sum(exp(v))).
inline double log_sum_exp(const Vector& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

/// Positions t != s, in ascending order, for a p-node graph.
inline std::vector<Index> other_nodes(Index s, Index p)
{
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(p > 0 ? p - 1 : 0));
    for (Index t = 0; t < p; ++t)
        if (t != s) out.push_back(t);
    return out;
}

} // namespace semiefgm
