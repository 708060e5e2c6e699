#pragma once

#include "errors.hpp"
#include "linalg.hpp"
#include "random.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <vector>

namespace semiefgm {

/// Shared settings for every l1-penalised solve.
struct SolveConfig {
    double lambda = 0.0;
    /// Effective feature dimension m of the log-determinant relaxation.
    double m_dim = 1.0;
    int max_iters = 20000;
    /// Sup-norm KKT residual at which a fit counts as converged.
    double grad_tol = 1e-6;
    /// Initial step; 0 means 1 / (power-iteration curvature estimate).
    double step_init = 0.0;
    double backtrack_factor = 0.5;
    /// Minimum eigenvalue kept by log-determinant iterates.
    double pd_floor = 1e-6;
    int power_iters = 20;
    std::uint64_t power_seed = 0x9e3779b9ULL;

    void validate() const
    {
        detail::require(lambda >= 0.0, "SolveConfig: lambda must be nonnegative");
        detail::require(m_dim > 0.0, "SolveConfig: m_dim must be positive");
        detail::require(grad_tol > 0.0, "SolveConfig: grad_tol must be positive");
        detail::require(backtrack_factor > 0.0 && backtrack_factor < 1.0,
                        "SolveConfig: backtrack_factor must lie in (0, 1)");
        detail::require(max_iters >= 1, "SolveConfig: max_iters must be positive");
        detail::require(pd_floor > 0.0, "SolveConfig: pd_floor must be positive");
    }
};

struct SolveStats {
    std::vector<double> objective_trace;
    double kkt_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/// Sup-norm violation of the subgradient optimality conditions of
/// f(x) + sum_j penalty_j |x_j| given grad = grad f(x):
///   unpenalised:   |g_j|
///   x_j == 0:      max(0, |g_j| - penalty_j)
///   x_j != 0:      |g_j + penalty_j sign(x_j)|
inline double kkt_residual(const Vector& x, const Vector& grad, const Vector& penalty)
{
    double worst = 0.0;
    for (Index j = 0; j < x.size(); ++j) {
        double r = 0.0;
        if (penalty(j) == 0.0)
            r = std::abs(grad(j));
        else if (x(j) == 0.0)
            r = std::max(0.0, std::abs(grad(j)) - penalty(j));
        else
            r = std::abs(grad(j) + penalty(j) * sign(x(j)));
        worst = std::max(worst, r);
    }
    return worst;
}

inline double l1_penalty(const Vector& x, const Vector& penalty)
{
    return (x.cwiseAbs().array() * penalty.array()).sum();
}

/// Smooth convex part of a composite objective.
template <class P>
concept SmoothObjective = requires(const P& problem, const Vector& x, Vector& grad) {
    { problem.value_and_gradient(x, grad) } -> std::convertible_to<double>;
};

namespace detail {

template <SmoothObjective P>
bool feasible(const P& problem, const Vector& x)
{
    if constexpr (requires { { problem.feasible(x) } -> std::convertible_to<bool>; })
        return problem.feasible(x);
    else
        return true;
}

/// Largest Hessian eigenvalue at x by power iteration; Hessian-vector
/// products are exact when the problem provides them, else forward differences.
template <SmoothObjective P>
double curvature_estimate(const P& problem, const Vector& x, const Vector& grad_x, const SolveConfig& cfg)
{
    Rng rng(cfg.power_seed);
    Vector v(x.size());
    for (Index j = 0; j < v.size(); ++j) v(j) = rng.normal();
    v.normalize();
    Vector hv(x.size()), g_shift(x.size());
    double estimate = 0.0;
    for (int k = 0; k < cfg.power_iters; ++k) {
        if constexpr (requires { problem.hessian_vector(x, v, hv); }) {
            problem.hessian_vector(x, v, hv);
        } else {
            const double eps = 1e-6 * std::max(1.0, x.norm());
            problem.value_and_gradient(x + eps * v, g_shift);
            hv = (g_shift - grad_x) / eps;
        }
        const double norm = hv.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) break;
        estimate = v.dot(hv);
        v = hv / norm;
    }
    return estimate;
}

} // namespace detail

/// Monotone proximal gradient with backtracking for
///   min_x f(x) + sum_j penalty_j |x_j|.
/// Trial steps come from the Barzilai-Borwein rule and are shrunk by
/// backtrack_factor until the iterate is feasible and the quadratic upper
/// bound holds, so the objective never increases. x is updated in place.
template <SmoothObjective P>
SolveStats proximal_gradient(const P& problem, Vector& x, const Vector& penalty, const SolveConfig& cfg)
{
    cfg.validate();
    detail::require(penalty.size() == x.size(), "proximal_gradient: penalty length != variable length");
    detail::require(detail::feasible(problem, x), "proximal_gradient: starting point is infeasible");

    SolveStats stats;
    Vector grad(x.size());
    double f = problem.value_and_gradient(x, grad);
    detail::require(std::isfinite(f), "proximal_gradient: objective is not finite at the starting point");
    stats.objective_trace.push_back(f + l1_penalty(x, penalty));

    double step = cfg.step_init;
    if (!(step > 0.0)) {
        const double curvature = detail::curvature_estimate(problem, x, grad, cfg);
        step = curvature > 0.0 ? 1.0 / curvature : 1.0;
    }

    Vector x_new(x.size()), grad_new(x.size()), delta(x.size());
    for (stats.iterations = 0; stats.iterations < cfg.max_iters; ++stats.iterations) {
        stats.kkt_residual = kkt_residual(x, grad, penalty);
        if (stats.kkt_residual <= cfg.grad_tol) {
            stats.converged = true;
            break;
        }
        bool accepted = false;
        double f_new = 0.0;
        for (int attempt = 0; attempt < 200; ++attempt) {
            for (Index j = 0; j < x.size(); ++j)
                x_new(j) = soft_threshold(x(j) - step * grad(j), step * penalty(j));
            if (!detail::feasible(problem, x_new)) {
                step *= cfg.backtrack_factor;
                continue;
            }
            f_new = problem.value_and_gradient(x_new, grad_new);
            delta = x_new - x;
            const double model = f + grad.dot(delta) + delta.squaredNorm() / (2.0 * step);
            const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f));
            if (std::isfinite(f_new) && f_new <= model + slack) {
                accepted = true;
                break;
            }
            step *= cfg.backtrack_factor;
        }
        if (!accepted) break;

        const double ss = delta.squaredNorm();
        const double sy = delta.dot(grad_new - grad);
        x.swap(x_new);
        grad.swap(grad_new);
        f = f_new;
        stats.objective_trace.push_back(f + l1_penalty(x, penalty));
        if (ss == 0.0) continue;
        step = sy > 0.0 ? ss / sy : step / cfg.backtrack_factor;
    }
    stats.kkt_residual = kkt_residual(x, grad, penalty);
    stats.converged = stats.kkt_residual <= cfg.grad_tol;
    return stats;
}

} // namespace semiefgm
