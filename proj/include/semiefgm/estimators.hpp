#pragma once

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "param_matrix.hpp"
#include "solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace semiefgm {

struct FitResult {
    ParamMatrix theta_hat;
    std::vector<double> objective_trace;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// One node's directed estimate; weights are indexed over t != node ascending.
struct NodeFit {
    Index node = 0;
    Vector weights;
    SolveStats stats;
};

/// All p directed fits plus their min-magnitude symmetrisation.
struct NodewiseFit {
    ParamMatrix theta_hat;
    std::vector<NodeFit> nodes;

    bool converged() const
    {
        for (const auto& n : nodes)
            if (!n.stats.converged) return false;
        return true;
    }
    double kkt_residual() const
    {
        double worst = 0.0;
        for (const auto& n : nodes) worst = std::max(worst, n.stats.kkt_residual);
        return worst;
    }
};

namespace detail {

inline Vector flatten(const Matrix& a) { return Eigen::Map<const Vector>(a.data(), a.size()); }

/// -(m/2) logdet Theta + tr(Theta Phi) over the column-major vectorised Theta.
struct LogdetProblem {
    const Matrix& phi;
    double half_m;
    double pd_floor;

    Index p() const { return phi.rows(); }

    double value_and_gradient(const Vector& x, Vector& grad) const
    {
        const Eigen::Map<const Matrix> theta(x.data(), p(), p());
        const Eigen::LLT<Matrix> llt(theta);
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        const Matrix L = llt.matrixL();
        const double logdet = 2.0 * L.diagonal().array().log().sum();
        Matrix inv = llt.solve(Matrix::Identity(p(), p()));
        Matrix g = -half_m * inv + phi;
        g = 0.5 * (g + g.transpose()).eval();
        grad = flatten(g);
        return -half_m * logdet + theta.cwiseProduct(phi).sum();
    }

    bool feasible(const Vector& x) const
    {
        const Eigen::Map<const Matrix> theta(x.data(), p(), p());
        const Matrix shifted = theta - pd_floor * Matrix::Identity(p(), p());
        return Eigen::LLT<Matrix>(shifted).info() == Eigen::Success;
    }

    void hessian_vector(const Vector& x, const Vector& v, Vector& out) const
    {
        const Eigen::Map<const Matrix> theta(x.data(), p(), p());
        const Eigen::Map<const Matrix> dir(v.data(), p(), p());
        const Eigen::LLT<Matrix> llt(theta);
        const Matrix inv = llt.solve(Matrix::Identity(p(), p()));
        out = flatten(half_m * inv * dir * inv);
    }
};

/// (1/4) x'Qx - b'x.
struct LassoProblem {
    Matrix Q;
    Vector b;

    double value_and_gradient(const Vector& x, Vector& grad) const
    {
        const Vector qx = Q * x;
        grad = 0.5 * qx - b;
        return 0.25 * x.dot(qx) - b.dot(x);
    }

    void hessian_vector(const Vector&, const Vector& v, Vector& out) const { out = 0.5 * (Q * v); }
};

/// Joint negative log-likelihood over the upper-triangle edge weights; the
/// diagonal stays at its fixed value of one.
struct JointMleProblem {
    const ModelSpec& model;
    Matrix empirical;
    std::vector<std::pair<Index, Index>> pairs;
    Index p;

    ParamMatrix assemble(const Vector& x) const
    {
        ParamMatrix theta = ParamMatrix::identity(p, Role::estimate);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto [s, t] = pairs[k];
            theta.theta(s, t) = x(static_cast<Index>(k));
            theta.theta(t, s) = x(static_cast<Index>(k));
        }
        return theta;
    }

    double value_and_gradient(const Vector& x, Vector& grad) const
    {
        const ParamMatrix theta = assemble(x);
        const JointMoments moments = joint_moments_exact(model, theta);
        grad.resize(x.size());
        double linear = empirical.diagonal().sum();
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto [s, t] = pairs[k];
            grad(static_cast<Index>(k)) = moments.expectations(s, t) - empirical(s, t);
            linear += x(static_cast<Index>(k)) * empirical(s, t);
        }
        return moments.log_partition - linear;
    }
};

struct NodeMleProblem {
    const NodeConditional& conditional;

    double value_and_gradient(const Vector& x, Vector& grad) const
    {
        return conditional.value_and_gradient(x, grad);
    }
};

inline void require_psd_gram(const GramAverage& phi, const char* op)
{
    if (phi.matrix.rows() != phi.matrix.cols() || phi.matrix.rows() < 2)
        throw InvalidInput(std::string(op) + ": Gram average must be square with p >= 2");
    if (symmetry_error(phi.matrix) > 1e-12) throw InvalidInput(std::string(op) + ": Gram average is not symmetric");
    if (!is_psd(phi.matrix)) throw InvalidInput(std::string(op) + ": Gram average is not positive semidefinite");
}

inline std::vector<std::pair<Index, Index>> upper_pairs(Index p)
{
    std::vector<std::pair<Index, Index>> pairs;
    for (Index s = 0; s < p; ++s)
        for (Index t = s + 1; t < p; ++t) pairs.emplace_back(s, t);
    return pairs;
}

} // namespace detail

/// Relaxed joint program
///   min_{Theta > 0}  -(m/2) logdet Theta + tr(Theta Phi_n) + lambda sum_{s != t} |Theta_st|.
/// Starts from the warm start when it is feasible, else from diag(m / (2 Phi_ss)).
inline FitResult fit_joint_logdet(const GramAverage& phi, const SolveConfig& cfg, const ParamMatrix* warm = nullptr)
{
    cfg.validate();
    detail::require_psd_gram(phi, "fit_joint_logdet");
    const Index p = phi.p();
    const detail::LogdetProblem problem{phi.matrix, 0.5 * cfg.m_dim, cfg.pd_floor};

    Matrix start = Matrix::Zero(p, p);
    for (Index s = 0; s < p; ++s) {
        const double d = phi.matrix(s, s);
        detail::require(d > 0.0, "fit_joint_logdet: Gram average has a zero diagonal entry");
        start(s, s) = cfg.m_dim / (2.0 * d);
    }
    Vector x = detail::flatten(start);
    if (warm && warm->p() == p) {
        const Vector candidate = detail::flatten(warm->theta);
        if (problem.feasible(candidate)) x = candidate;
    }
    detail::require(problem.feasible(x), "fit_joint_logdet: diagonal start is below pd_floor; lower pd_floor");

    Vector penalty = Vector::Constant(p * p, cfg.lambda);
    for (Index s = 0; s < p; ++s) penalty(s * p + s) = 0.0;

    SolveStats stats = proximal_gradient(problem, x, penalty, cfg);
    Matrix theta = Eigen::Map<const Matrix>(x.data(), p, p);
    theta = 0.5 * (theta + theta.transpose()).eval();
    return {{std::move(theta), DiagMode::free, Role::estimate},
            std::move(stats.objective_trace),
            stats.kkt_residual,
            stats.iterations,
            stats.converged};
}

/// Relaxed node-wise program for node s:
///   min_theta (1/4) theta' Phi_{-s,-s} theta - Phi_{s,-s}' theta + lambda ||theta||_1.
inline NodeFit fit_nodewise_lasso(const GramAverage& phi, Index s, const SolveConfig& cfg, const Vector* warm = nullptr)
{
    cfg.validate();
    detail::require_psd_gram(phi, "fit_nodewise_lasso");
    const Index p = phi.p();
    detail::require(s >= 0 && s < p, "fit_nodewise_lasso: node index out of range");
    const auto others = other_nodes(s, p);
    const Index k = p - 1;
    detail::LassoProblem problem{Matrix(k, k), Vector(k)};
    for (Index a = 0; a < k; ++a) {
        problem.b(a) = phi.matrix(s, others[a]);
        for (Index b = 0; b < k; ++b) problem.Q(a, b) = phi.matrix(others[a], others[b]);
    }
    Vector x = (warm && warm->size() == k) ? *warm : Vector::Zero(k);
    SolveStats stats = proximal_gradient(problem, x, Vector::Constant(k, cfg.lambda), cfg);
    return {s, std::move(x), std::move(stats)};
}

/// Combines directed estimates: columns(t, s) holds node s's weight on t.
/// Each edge keeps the smaller-magnitude direction, sign included; exact
/// ties keep the value from column min(s, t).
inline ParamMatrix symmetrize_min_magnitude(const Matrix& columns)
{
    detail::require(columns.rows() == columns.cols(), "symmetrize_min_magnitude: need a square matrix");
    const Index p = columns.rows();
    ParamMatrix out{Matrix::Zero(p, p), DiagMode::fixed_one, Role::estimate};
    for (Index s = 0; s < p; ++s) {
        out.theta(s, s) = 1.0;
        for (Index t = s + 1; t < p; ++t) {
            const double from_s = columns(t, s);
            const double from_t = columns(s, t);
            const double v = std::abs(from_t) < std::abs(from_s) ? from_t : from_s;
            out.theta(s, t) = v;
            out.theta(t, s) = v;
        }
    }
    return out;
}

inline Matrix columns_from_nodes(const std::vector<NodeFit>& nodes, Index p)
{
    Matrix columns = Matrix::Zero(p, p);
    for (const auto& fit : nodes) {
        const auto others = other_nodes(fit.node, p);
        for (std::size_t j = 0; j < others.size(); ++j) columns(others[j], fit.node) = fit.weights(static_cast<Index>(j));
    }
    return columns;
}

/// Relaxed node-wise fits for every node, symmetrised.
inline NodewiseFit fit_nodewise_lasso_all(const GramAverage& phi, const SolveConfig& cfg,
                                          const NodewiseFit* warm = nullptr)
{
    NodewiseFit out;
    const Index p = phi.p();
    for (Index s = 0; s < p; ++s) {
        const Vector* start = (warm && static_cast<Index>(warm->nodes.size()) == p) ? &warm->nodes[s].weights : nullptr;
        out.nodes.push_back(fit_nodewise_lasso(phi, s, cfg, start));
    }
    out.theta_hat = symmetrize_min_magnitude(columns_from_nodes(out.nodes, p));
    return out;
}

/// Penalised joint MLE with quadrature-exact gradients; diagonal fixed at one,
/// every upper-triangle edge weight penalised. p <= 4.
inline FitResult fit_joint_mle_exact(const Dataset& data, const ModelSpec& model, const SolveConfig& cfg,
                                     const ParamMatrix* warm = nullptr)
{
    cfg.validate();
    model.validate();
    detail::require_scalar(data, "fit_joint_mle_exact");
    const Index p = data.p();
    if (p > kMaxTensorDimension)
        throw UnsupportedOperation("fit_joint_mle_exact: tensor quadrature supports p <= 4");
    detail::JointMleProblem problem{model, empirical_moments(model, data), detail::upper_pairs(p), p};
    Vector x = Vector::Zero(static_cast<Index>(problem.pairs.size()));
    if (warm && warm->p() == p)
        for (std::size_t k = 0; k < problem.pairs.size(); ++k)
            x(static_cast<Index>(k)) = warm->theta(problem.pairs[k].first, problem.pairs[k].second);
    SolveStats stats = proximal_gradient(problem, x, Vector::Constant(x.size(), cfg.lambda), cfg);
    return {problem.assemble(x), std::move(stats.objective_trace), stats.kkt_residual, stats.iterations,
            stats.converged};
}

/// Penalised node-conditional MLE for node s over a shared kernel table.
inline NodeFit fit_nodewise_mle_exact(const ConditionalTable& table, Index s, const SolveConfig& cfg,
                                      const Vector* warm = nullptr)
{
    cfg.validate();
    const NodeConditional conditional(table, s);
    const detail::NodeMleProblem problem{conditional};
    Vector x = (warm && warm->size() == conditional.dim()) ? *warm : Vector::Zero(conditional.dim());
    SolveStats stats = proximal_gradient(problem, x, Vector::Constant(x.size(), cfg.lambda), cfg);
    return {s, std::move(x), std::move(stats)};
}

inline NodeFit fit_nodewise_mle_exact(const Dataset& data, Index s, const ModelSpec& model, const SolveConfig& cfg)
{
    model.validate();
    detail::require_scalar(data, "fit_nodewise_mle_exact");
    const ConditionalTable table(model, data);
    return fit_nodewise_mle_exact(table, s, cfg);
}

/// Warm-started regularisation path. fit(lambda, previous) returns one
/// result; previous is null for the first (largest) lambda.
template <class Result>
std::vector<Result> lambda_path(const std::function<Result(double, const Result*)>& fit,
                                std::span<const double> lambdas)
{
    detail::require(!lambdas.empty(), "lambda_path: empty lambda grid");
    for (std::size_t k = 1; k < lambdas.size(); ++k)
        detail::require(lambdas[k] < lambdas[k - 1], "lambda_path: lambdas must be strictly descending");
    std::vector<Result> path;
    path.reserve(lambdas.size());
    for (std::size_t k = 0; k < lambdas.size(); ++k) path.push_back(fit(lambdas[k], k == 0 ? nullptr : &path.back()));
    return path;
}

inline std::vector<FitResult> logdet_path(const GramAverage& phi, std::span<const double> lambdas, SolveConfig cfg)
{
    return lambda_path<FitResult>(
        [&](double lambda, const FitResult* prev) {
            cfg.lambda = lambda;
            return fit_joint_logdet(phi, cfg, prev ? &prev->theta_hat : nullptr);
        },
        lambdas);
}

inline std::vector<NodewiseFit> nodewise_lasso_path(const GramAverage& phi, std::span<const double> lambdas,
                                                    SolveConfig cfg)
{
    return lambda_path<NodewiseFit>(
        [&](double lambda, const NodewiseFit* prev) {
            cfg.lambda = lambda;
            return fit_nodewise_lasso_all(phi, cfg, prev);
        },
        lambdas);
}

/// Positions k > 0 along a descending-lambda path where the off-diagonal
/// support shrinks relative to position k - 1.
inline std::vector<std::size_t> support_shrink_points(const std::vector<ParamMatrix>& path, double threshold = 0.0)
{
    std::vector<std::size_t> out;
    for (std::size_t k = 1; k < path.size(); ++k)
        if (path[k].edge_count(threshold) < path[k - 1].edge_count(threshold)) out.push_back(k);
    return out;
}

/// Smallest lambda at which both relaxed programs return no edges: the
/// off-diagonal gradient at the edgeless solution is Phi_st in either case.
inline double relaxed_lambda_max(const GramAverage& phi)
{
    const Index p = phi.p();
    double worst = 0.0;
    for (Index s = 0; s < p; ++s)
        for (Index t = 0; t < p; ++t)
            if (s != t) worst = std::max(worst, std::abs(phi.matrix(s, t)));
    return worst;
}

/// Log-spaced descending grid from hi to hi * ratio.
inline std::vector<double> log_grid(double hi, double ratio, int count)
{
    detail::require(hi > 0.0 && ratio > 0.0 && ratio < 1.0 && count >= 1, "log_grid: bad arguments");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k)
        out[static_cast<std::size_t>(k)] = count == 1 ? hi : hi * std::pow(ratio, static_cast<double>(k) / (count - 1));
    return out;
}

/// Held-out relaxed negative log-likelihood -(m/2) logdet Theta + tr(Theta Phi).
/// Returns +inf when Theta is not positive definite.
inline double relaxed_joint_score(const ParamMatrix& theta, const GramAverage& holdout, double m_dim)
{
    const Eigen::LLT<Matrix> llt(theta.theta);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Matrix L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    return -0.5 * m_dim * logdet + theta.theta.cwiseProduct(holdout.matrix).sum();
}

/// Held-out relaxed node-wise loss summed over nodes, evaluated at the
/// directed estimates: sum_s (1/4) theta_s' Phi_{-s,-s} theta_s - Phi_{s,-s}' theta_s.
inline double relaxed_nodewise_score(const NodewiseFit& fit, const GramAverage& holdout)
{
    const Index p = holdout.p();
    double total = 0.0;
    for (const auto& node : fit.nodes) {
        const auto others = other_nodes(node.node, p);
        const Index k = p - 1;
        for (Index a = 0; a < k; ++a) {
            total -= holdout.matrix(node.node, others[a]) * node.weights(a);
            for (Index b = 0; b < k; ++b)
                total += 0.25 * node.weights(a) * holdout.matrix(others[a], others[b]) * node.weights(b);
        }
    }
    return total;
}

} // namespace semiefgm
