#pragma once

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "param_matrix.hpp"
#include "random.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace semiefgm {

/// Single-site Gibbs settings. The grid and domain here define the
/// sampling discretisation and override the truth model's own.
struct GibbsConfig {
    int burn_in = 500;
    int thin = 10;
    std::uint64_t seed = 1;
    int grid_points = 401;
    double domain_lo = -10.0;
    double domain_hi = 10.0;
    bool random_scan = false;

    void validate() const
    {
        detail::require(burn_in >= 0, "GibbsConfig: burn_in must be nonnegative");
        detail::require(thin >= 1, "GibbsConfig: thin must be at least 1");
        detail::require(grid_points >= 201, "GibbsConfig: grid_points must be at least 201");
        detail::require(domain_lo < domain_hi, "GibbsConfig: empty domain");
    }
};

enum class TruthKind { model1, model2, custom };

inline std::string to_string(TruthKind k)
{
    switch (k) {
    case TruthKind::model1: return "model1";
    case TruthKind::model2: return "model2";
    case TruthKind::custom: return "custom";
    }
    return "unknown";
}

struct TruthModel {
    ParamMatrix theta_star;
    ModelSpec model;
    TruthKind kind = TruthKind::custom;
    double edge_probability = 0.0;
};

/// Block model: nodes split into 10 consecutive groups (the first p % 10
/// groups take one extra node); theta_st = 1 inside a group.
inline TruthModel make_model1(Index p, const ModelSpec& model = {})
{
    detail::require(p >= 10, "make_model1: need p >= 10");
    constexpr Index groups = 10;
    std::vector<Index> group_of(p);
    Index next = 0;
    for (Index g = 0; g < groups; ++g) {
        const Index size = p / groups + (g < p % groups ? 1 : 0);
        for (Index k = 0; k < size; ++k) group_of[next++] = g;
    }
    ParamMatrix theta = ParamMatrix::identity(p, Role::truth);
    for (Index s = 0; s < p; ++s)
        for (Index t = 0; t < p; ++t)
            if (s != t && group_of[s] == group_of[t]) theta.theta(s, t) = 1.0;
    return {std::move(theta), model, TruthKind::model1, 0.0};
}

/// Erdos-Renyi model: each unordered pair carries weight 1 with probability P.
inline TruthModel make_model2(Index p, double edge_probability, std::uint64_t seed, const ModelSpec& model = {})
{
    detail::require(edge_probability > 0.0 && edge_probability < 1.0, "make_model2: P must lie in (0, 1)");
    detail::require(p >= 2, "make_model2: need p >= 2");
    Rng rng(seed);
    ParamMatrix theta = ParamMatrix::identity(p, Role::truth);
    for (Index s = 0; s < p; ++s)
        for (Index t = s + 1; t < p; ++t)
            if (rng.bernoulli(edge_probability)) {
                theta.theta(s, t) = 1.0;
                theta.theta(t, s) = 1.0;
            }
    return {std::move(theta), model, TruthKind::model2, edge_probability};
}

/// Path graph 0 - 1 - ... - (p-1) with a common edge weight.
inline TruthModel make_chain(Index p, double weight, const ModelSpec& model = {})
{
    detail::require(p >= 2, "make_chain: need p >= 2");
    ParamMatrix theta = ParamMatrix::identity(p, Role::truth);
    for (Index s = 0; s + 1 < p; ++s) {
        theta.theta(s, s + 1) = weight;
        theta.theta(s + 1, s) = weight;
    }
    return {std::move(theta), model, TruthKind::custom, 0.0};
}

namespace detail {

/// Draw from the discretised conditional with energies e (log masses):
/// pick a grid point by inverse CDF, then jitter uniformly inside its
/// trapezoid cell [g - h/2, g + h/2] clipped to the domain.
inline double draw_from_energies(const GridKernel& grid, const Vector& e, Vector& scratch, Rng& rng)
{
    const double m = e.maxCoeff();
    scratch = (e.array() - m).exp();
    const Index G = scratch.size();
    for (Index g = 1; g < G; ++g) scratch(g) += scratch(g - 1);
    const double target = rng.uniform() * scratch(G - 1);
    const double* begin = scratch.data();
    Index k = std::upper_bound(begin, begin + G, target) - begin;
    if (k >= G) k = G - 1;
    const ModelSpec& model = grid.model();
    const double half = 0.5 * model.spacing();
    const double lo = std::max(model.domain_lo, grid.grid()(k) - half);
    const double hi = std::min(model.domain_hi, grid.grid()(k) + half);
    return rng.uniform(lo, hi);
}

inline ModelSpec sampling_model(const ModelSpec& model, const GibbsConfig& cfg)
{
    ModelSpec out = model;
    out.domain_lo = cfg.domain_lo;
    out.domain_hi = cfg.domain_hi;
    out.grid_points = cfg.grid_points;
    return out;
}

} // namespace detail

/// One draw of a scalar node state from its conditional given neighbour states.
inline double sample_conditional(const ModelSpec& model, std::span<const double> weights,
                                 std::span<const double> neighbors, Rng& rng)
{
    const GridKernel grid(model);
    Vector scratch;
    return detail::draw_from_energies(grid, grid.conditional_energies(weights, neighbors), scratch, rng);
}

/// Scalar Gibbs chain states: n retained sweeps after burn_in, thin sweeps apart.
inline Dataset gibbs_states(const TruthModel& truth, Index n, const GibbsConfig& cfg)
{
    cfg.validate();
    detail::require(n >= 1, "gibbs_generate: need n >= 1");
    truth.theta_star.validate();
    const ModelSpec model = detail::sampling_model(truth.model, cfg);
    const GridKernel grid(model);
    const Matrix& theta = truth.theta_star.theta;
    const Index p = theta.rows();

    std::vector<std::vector<std::pair<Index, double>>> neighbors(p);
    for (Index s = 0; s < p; ++s)
        for (Index t = 0; t < p; ++t)
            if (t != s && theta(s, t) != 0.0) neighbors[s].emplace_back(t, theta(s, t));

    std::vector<Vector> node_offset(p);
    for (Index s = 0; s < p; ++s) node_offset[s] = grid.log_weights() + theta(s, s) * grid.base();

    Rng rng(cfg.seed);
    std::vector<double> state(p);
    for (auto& v : state) v = rng.uniform(cfg.domain_lo, cfg.domain_hi);

    Vector e(grid.size()), col(grid.size()), scratch(grid.size());
    auto update = [&](Index s) {
        e = node_offset[s];
        for (const auto& [t, w] : neighbors[s]) {
            grid.column(state[t], col.data());
            e.noalias() += w * col;
        }
        state[s] = detail::draw_from_energies(grid, e, scratch, rng);
    };
    auto sweep = [&] {
        if (cfg.random_scan) {
            for (Index k = 0; k < p; ++k) update(static_cast<Index>(rng.below(p)));
        } else {
            for (Index s = 0; s < p; ++s) update(s);
        }
    };

    for (int b = 0; b < cfg.burn_in; ++b) sweep();
    Dataset out(n, p, 1);
    for (Index i = 0; i < n; ++i) {
        for (int k = 0; k < cfg.thin; ++k) sweep();
        for (Index s = 0; s < p; ++s) out.scalar(i, s) = state[s];
    }
    return out;
}

/// Lifts scalar states to the model's variates (identity for scalar models).
inline Dataset lift_states(const ModelSpec& model, const Dataset& states)
{
    if (model.lift == FeatureLift::identity) return states;
    const Index d = model.feature_dim();
    Dataset out(states.n(), states.p(), d);
    for (Index i = 0; i < states.n(); ++i)
        for (Index s = 0; s < states.p(); ++s) model.lift_into(states.scalar(i, s), out.variate(i, s).data());
    return out;
}

/// Synthetic dataset from the truth model by single-site Gibbs sampling.
inline Dataset gibbs_generate(const TruthModel& truth, Index n, const GibbsConfig& cfg)
{
    return lift_states(truth.model, gibbs_states(truth, n, cfg));
}

} // namespace semiefgm
