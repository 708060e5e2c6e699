#pragma once

#include "dataset.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "param_matrix.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <string>

namespace semiefgm {

/// Unstacks feature dimensions as extra samples: row i * d + k of the
/// result holds coordinate k of every variate in sample i.
inline Dataset flatten_features(const Dataset& data)
{
    const Index d = data.feature_dim();
    if (d == 1) return data;
    const Index p = data.p();
    Dataset out(data.n() * d, p, 1);
    for (Index i = 0; i < data.n(); ++i)
        for (Index s = 0; s < p; ++s) {
            const auto v = data.variate(i, s);
            for (Index k = 0; k < d; ++k) out.scalar(i * d + k, s) = v[static_cast<std::size_t>(k)];
        }
    return out;
}

/// (1/n) sum_i (x_i - mean)(x_i - mean)'.
inline Matrix sample_covariance(const Dataset& data)
{
    if (!data.is_scalar()) throw InvalidInput("sample_covariance: flatten vector variates first");
    const Matrix x = data.scalar_matrix();
    const Matrix centered = x.rowwise() - x.colwise().mean();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows());
    return 0.5 * (cov + cov.transpose());
}

struct GlassoConfig {
    int max_sweeps = 10000;
    /// Stop when no entry of the working covariance moves by more than this.
    double tol = 1e-13;
    int max_inner = 100000;
};

struct GlassoStats {
    int sweeps = 0;
    bool converged = false;
};

/// Graphical lasso by block coordinate descent on the working covariance W:
///   min_{Theta > 0}  -logdet Theta + tr(Theta S) + lambda sum_{s != t} |Theta_st|,
/// diagonal unpenalised so W_ss = S_ss throughout.
inline ParamMatrix fit_glasso(const Matrix& S, double lambda, const GlassoConfig& cfg = {},
                              GlassoStats* stats = nullptr)
{
    detail::require(S.rows() == S.cols() && S.rows() >= 2, "fit_glasso: input must be square with p >= 2");
    detail::require(lambda >= 0.0, "fit_glasso: lambda must be nonnegative");
    if (!is_psd(S)) throw InvalidInput("fit_glasso: input is not positive semidefinite");
    const Index p = S.rows();
    for (Index s = 0; s < p; ++s) detail::require(S(s, s) > 0.0, "fit_glasso: zero diagonal entry");

    Matrix W = 0.5 * (S + S.transpose());
    Matrix B = Matrix::Zero(p - 1, p);  // column j: regression coefficients of node j
    Matrix W11(p - 1, p - 1);
    Vector s12(p - 1);

    auto gather = [&](Index j) {
        const auto others = other_nodes(j, p);
        for (Index a = 0; a < p - 1; ++a) {
            s12(a) = S(others[a], j);
            for (Index b = 0; b < p - 1; ++b) W11(a, b) = W(others[a], others[b]);
        }
        return others;
    };

    GlassoStats local;
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        local.sweeps = sweep + 1;
        double moved = 0.0;
        for (Index j = 0; j < p; ++j) {
            const auto others = gather(j);
            Vector beta = B.col(j);
            Vector wb = W11 * beta;
            for (int inner = 0; inner < cfg.max_inner; ++inner) {
                double change = 0.0;
                for (Index k = 0; k < p - 1; ++k) {
                    const double old = beta(k);
                    const double partial = s12(k) - (wb(k) - W11(k, k) * old);
                    const double next = soft_threshold(partial, lambda) / W11(k, k);
                    if (next != old) {
                        wb += W11.col(k) * (next - old);
                        beta(k) = next;
                        change = std::max(change, std::abs(next - old));
                    }
                }
                if (change <= cfg.tol * 1e-2) break;
            }
            B.col(j) = beta;
            for (Index a = 0; a < p - 1; ++a) {
                moved = std::max(moved, std::abs(W(others[a], j) - wb(a)));
                W(others[a], j) = wb(a);
                W(j, others[a]) = wb(a);
            }
        }
        if (moved <= cfg.tol) {
            local.converged = true;
            break;
        }
    }
    if (stats) *stats = local;

    Matrix theta = Matrix::Zero(p, p);
    for (Index j = 0; j < p; ++j) {
        const auto others = other_nodes(j, p);
        double w12_beta = 0.0;
        for (Index a = 0; a < p - 1; ++a) w12_beta += W(others[a], j) * B(a, j);
        const double diag = 1.0 / (W(j, j) - w12_beta);
        theta(j, j) = diag;
        for (Index a = 0; a < p - 1; ++a) theta(others[a], j) = -B(a, j) * diag;
    }
    theta = 0.5 * (theta + theta.transpose()).eval();
    return {std::move(theta), DiagMode::free, Role::estimate};
}

/// tau_st = 2 / (n (n - 1)) sum_{i<j} sign(x_s^i - x_s^j) sign(x_t^i - x_t^j); ties count zero.
inline Matrix kendall_tau_matrix(const Dataset& data)
{
    if (!data.is_scalar()) throw InvalidInput("kendall_tau_matrix: flatten vector variates first");
    const Index n = data.n();
    const Index p = data.p();
    detail::require(n >= 2, "kendall_tau_matrix: need n >= 2");
    const Matrix x = data.scalar_matrix();
    Matrix acc = Matrix::Zero(p, p);
    Matrix signs;
    for (Index i = 0; i + 1 < n; ++i) {
        const Index rest = n - i - 1;
        signs.resize(rest, p);
        for (Index s = 0; s < p; ++s)
            for (Index j = 0; j < rest; ++j) signs(j, s) = sign(x(i, s) - x(i + 1 + j, s));
        acc.noalias() += signs.transpose() * signs;
    }
    Matrix tau = acc * (2.0 / (static_cast<double>(n) * static_cast<double>(n - 1)));
    for (Index s = 0; s < p; ++s) tau(s, s) = 1.0;
    return 0.5 * (tau + tau.transpose());
}

enum class CorrelationSource { pearson, kendall_skeptic };

struct CorrelationMatrix {
    Matrix matrix;
    CorrelationSource source = CorrelationSource::kendall_skeptic;
    /// Set when the raw estimate was not PSD and was replaced by its projection.
    bool projected = false;
};

inline constexpr double kCorrelationEigenFloor = 1e-4;

/// Nearest correlation matrix by alternating projections with Dykstra's
/// correction; the result has unit diagonal and eigenvalues >= floor / max diag.
inline Matrix nearest_correlation(const Matrix& a, double eigen_floor = kCorrelationEigenFloor, int max_iters = 100)
{
    const Index p = a.rows();
    auto psd_part = [&](const Matrix& m) {
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
        const Vector vals = eig.eigenvalues().cwiseMax(eigen_floor);
        Matrix out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
        return Matrix(0.5 * (out + out.transpose()));
    };
    Matrix y = a;
    Matrix correction = Matrix::Zero(p, p);
    for (int k = 0; k < max_iters; ++k) {
        const Matrix r = y - correction;
        const Matrix x = psd_part(r);
        correction = x - r;
        Matrix next = x;
        next.diagonal().setOnes();
        const double change = (next - y).norm();
        y = std::move(next);
        if (change <= 1e-12 * std::max(1.0, y.norm())) break;
    }
    Matrix x = psd_part(y);
    const Vector scale = x.diagonal().cwiseSqrt().cwiseInverse();
    x = scale.asDiagonal() * x * scale.asDiagonal();
    x.diagonal().setOnes();
    return 0.5 * (x + x.transpose());
}

/// S_st = sin(pi tau_st / 2) off the diagonal, 1 on it; projected to the
/// nearest correlation matrix when not PSD.
inline CorrelationMatrix skeptic_correlation(const Matrix& tau)
{
    detail::require(tau.rows() == tau.cols(), "skeptic_correlation: tau must be square");
    const Index p = tau.rows();
    Matrix s(p, p);
    for (Index a = 0; a < p; ++a)
        for (Index b = 0; b < p; ++b) {
            detail::require(std::abs(tau(a, b)) <= 1.0 + 1e-12, "skeptic_correlation: |tau| must be <= 1");
            s(a, b) = a == b ? 1.0 : std::sin(0.5 * std::numbers::pi * tau(a, b));
        }
    s = 0.5 * (s + s.transpose()).eval();
    if (is_psd(s)) return {std::move(s), CorrelationSource::kendall_skeptic, false};
    return {nearest_correlation(s), CorrelationSource::kendall_skeptic, true};
}

/// Gaussian graphical model baseline: glasso on the covariance of the flattened features.
inline ParamMatrix fit_ggm(const Dataset& data, double lambda, const GlassoConfig& cfg = {},
                           GlassoStats* stats = nullptr)
{
    return fit_glasso(sample_covariance(flatten_features(data)), lambda, cfg, stats);
}

/// Nonparanormal baseline: glasso on the Kendall-tau SKEPTIC correlation.
inline ParamMatrix fit_nonparanormal(const Dataset& data, double lambda, const GlassoConfig& cfg = {},
                                     GlassoStats* stats = nullptr)
{
    return fit_glasso(skeptic_correlation(kendall_tau_matrix(flatten_features(data))).matrix, lambda, cfg, stats);
}

} // namespace semiefgm
