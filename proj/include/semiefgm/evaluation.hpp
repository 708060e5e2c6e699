#pragma once

#include "dataset.hpp"
#include "density.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "gibbs.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "param_matrix.hpp"
#include "random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace semiefgm {

struct SupportMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
    double threshold = 1e-3;
    Index tp = 0;
    Index fp = 0;
    Index fn = 0;
};

inline constexpr double kSupportThreshold = 1e-3;

namespace detail {

/// P := 0 when nothing is predicted, R := 0 when nothing is true, F := 0 when P + R = 0.
inline SupportMetrics metrics_from_counts(Index tp, Index fp, Index fn, double threshold)
{
    SupportMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.fn = fn;
    m.threshold = threshold;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double sum = m.precision + m.recall;
    m.fscore = sum > 0.0 ? 2.0 * m.precision * m.recall / sum : 0.0;
    return m;
}

} // namespace detail

/// Edge recovery over unordered pairs s < t. An estimated edge is
/// |estimate_st| > threshold; a true edge is truth_st != 0.
inline SupportMetrics support_metrics(const ParamMatrix& estimate, const ParamMatrix& truth,
                                      double threshold = kSupportThreshold)
{
    if (estimate.theta.rows() != truth.theta.rows() || estimate.theta.cols() != truth.theta.cols())
        throw InvalidInput("support_metrics: estimate and truth dimensions differ");
    Index tp = 0, fp = 0, fn = 0;
    const Index p = truth.p();
    for (Index s = 0; s < p; ++s)
        for (Index t = s + 1; t < p; ++t) {
            const bool predicted = std::abs(estimate.theta(s, t)) > threshold;
            const bool actual = truth.theta(s, t) != 0.0;
            tp += predicted && actual;
            fp += predicted && !actual;
            fn += !predicted && actual;
        }
    return detail::metrics_from_counts(tp, fp, fn, threshold);
}

/// Top-k links by |estimate_st| (ties broken by (s, t) in row-major order);
/// a link is correct iff its endpoints share a label. Recall is over all
/// same-label pairs.
inline SupportMetrics topk_link_metrics(const ParamMatrix& estimate, std::span<const int> labels, Index k)
{
    const Index p = estimate.p();
    detail::require(static_cast<Index>(labels.size()) == p, "topk_link_metrics: one label per node required");
    const auto pairs = detail::upper_pairs(p);
    detail::require(k >= 0 && k <= static_cast<Index>(pairs.size()), "topk_link_metrics: k exceeds the pair count");
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(estimate.theta(pairs[a].first, pairs[a].second)) >
               std::abs(estimate.theta(pairs[b].first, pairs[b].second));
    });
    Index same_total = 0;
    for (const auto& [s, t] : pairs) same_total += labels[s] == labels[t];
    Index tp = 0;
    for (Index r = 0; r < k; ++r) {
        const auto [s, t] = pairs[order[static_cast<std::size_t>(r)]];
        tp += labels[s] == labels[t];
    }
    return detail::metrics_from_counts(tp, k - tp, same_total - tp, 0.0);
}

/// Cohen's kappa between the edge indicators of two estimates over unordered
/// pairs (|entry| > threshold). Zero when chance agreement is total.
inline double support_kappa(const ParamMatrix& a, const ParamMatrix& b, double threshold = kSupportThreshold)
{
    detail::require(a.p() == b.p(), "support_kappa: dimension mismatch");
    double both = 0.0, only_a = 0.0, only_b = 0.0, neither = 0.0;
    for (Index s = 0; s < a.p(); ++s)
        for (Index t = s + 1; t < a.p(); ++t) {
            const bool x = std::abs(a.theta(s, t)) > threshold;
            const bool y = std::abs(b.theta(s, t)) > threshold;
            both += x && y;
            only_a += x && !y;
            only_b += !x && y;
            neither += !x && !y;
        }
    const double total = both + only_a + only_b + neither;
    if (total == 0.0) return 0.0;
    const double observed = (both + neither) / total;
    const double chance = ((both + only_a) * (both + only_b) + (neither + only_b) * (neither + only_a)) / (total * total);
    return chance < 1.0 ? (observed - chance) / (1.0 - chance) : 0.0;
}

using FrequencyMap = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Per-entry count of |entry| > threshold across replications; diagonal left at 0.
inline FrequencyMap frequency_map(std::span<const ParamMatrix> estimates, double threshold = kSupportThreshold)
{
    detail::require(!estimates.empty(), "frequency_map: no estimates");
    const Index p = estimates.front().p();
    FrequencyMap map = FrequencyMap::Zero(p, p);
    for (const auto& e : estimates) {
        detail::require(e.p() == p, "frequency_map: estimates differ in dimension");
        for (Index s = 0; s < p; ++s)
            for (Index t = s + 1; t < p; ++t)
                if (std::abs(e.theta(s, t)) > threshold) {
                    ++map(s, t);
                    ++map(t, s);
                }
    }
    return map;
}

inline double median(std::vector<double> values)
{
    detail::require(!values.empty(), "median: empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Ordinary least squares y ~ intercept + slope x.
inline LineFit least_squares_line(std::span<const double> x, std::span<const double> y)
{
    detail::require(x.size() == y.size() && x.size() >= 2, "least_squares_line: need two or more paired points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    detail::require(sxx > 0.0, "least_squares_line: x values are all equal");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

struct RateCheckResult {
    std::vector<Index> sample_sizes;
    std::vector<double> statistic_medians;
    double fitted_slope = 0.0;
    std::array<double, 2> slope_ci{0.0, 0.0};
    /// statistics[k][r]: replicate r at sample_sizes[k].
    std::vector<std::vector<double>> statistics;
    bool all_converged = true;

    bool medians_decreasing() const
    {
        for (std::size_t k = 1; k < statistic_medians.size(); ++k)
            if (!(statistic_medians[k] < statistic_medians[k - 1])) return false;
        return true;
    }
};

/// Slope of log(median statistic) on log(n), with a percentile bootstrap
/// interval from resampling replicates within each n. The slope is NaN when
/// some median is not positive.
inline RateCheckResult summarize_rate(std::vector<Index> sample_sizes, std::vector<std::vector<double>> statistics,
                                      std::uint64_t seed, int resamples = 1000)
{
    detail::require(sample_sizes.size() == statistics.size() && sample_sizes.size() >= 2,
                    "summarize_rate: need statistics for two or more sample sizes");
    for (std::size_t k = 1; k < sample_sizes.size(); ++k)
        detail::require(sample_sizes[k] > sample_sizes[k - 1], "summarize_rate: sample sizes must increase");
    RateCheckResult out;
    std::vector<double> log_n;
    for (Index n : sample_sizes) log_n.push_back(std::log(static_cast<double>(n)));
    std::vector<double> log_median;
    bool positive = true;
    for (const auto& stats : statistics) {
        const double m = median(stats);
        out.statistic_medians.push_back(m);
        positive = positive && m > 0.0;
        log_median.push_back(m > 0.0 ? std::log(m) : 0.0);
    }
    if (!positive) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        out.fitted_slope = nan;
        out.slope_ci = {nan, nan};
        out.sample_sizes = std::move(sample_sizes);
        out.statistics = std::move(statistics);
        return out;
    }
    out.fitted_slope = least_squares_line(log_n, log_median).slope;

    Rng rng(derive_seed(seed, {0xb0075ULL}));
    std::vector<double> slopes;
    slopes.reserve(static_cast<std::size_t>(resamples));
    std::vector<double> draw;
    for (int b = 0; b < resamples; ++b) {
        std::vector<double> y;
        bool usable = true;
        for (const auto& stats : statistics) {
            draw.clear();
            for (std::size_t r = 0; r < stats.size(); ++r) draw.push_back(stats[rng.below(stats.size())]);
            const double m = median(draw);
            usable = usable && m > 0.0;
            y.push_back(m > 0.0 ? std::log(m) : 0.0);
        }
        if (usable) slopes.push_back(least_squares_line(log_n, y).slope);
    }
    std::sort(slopes.begin(), slopes.end());
    if (!slopes.empty()) {
        auto at = [&](double q) {
            const double pos = q * static_cast<double>(slopes.size() - 1);
            const auto lo = static_cast<std::size_t>(std::floor(pos));
            const auto hi = std::min(lo + 1, slopes.size() - 1);
            return slopes[lo] + (pos - static_cast<double>(lo)) * (slopes[hi] - slopes[lo]);
        };
        out.slope_ci = {at(0.025), at(0.975)};
    }
    out.sample_sizes = std::move(sample_sizes);
    out.statistics = std::move(statistics);
    return out;
}

struct RateCheckOptions {
    /// Sampling settings; their grid and domain also define the quadrature model.
    GibbsConfig gibbs;
    int threads = 1;
    int bootstrap_resamples = 1000;
};

namespace detail {

/// Runs cell(k, r, seed) over the (sample size, replicate) grid in parallel.
template <class Cell>
std::vector<std::vector<double>> run_rate_grid(std::span<const Index> n_grid, int replications, std::uint64_t seed,
                                               int threads, Cell&& cell)
{
    detail::require(!n_grid.empty() && replications >= 1, "rate check: empty sample-size grid or no replications");
    std::vector<std::vector<double>> out(n_grid.size(), std::vector<double>(static_cast<std::size_t>(replications)));
    const std::size_t reps = static_cast<std::size_t>(replications);
    parallel_for(n_grid.size() * reps, threads, [&](std::size_t job) {
        const std::size_t k = job / reps;
        const std::size_t r = job % reps;
        out[k][r] = cell(k, r, derive_seed(seed, {static_cast<std::uint64_t>(n_grid[k]), r}));
    });
    return out;
}

} // namespace detail

/// Sup-norm of the likelihood gradient at the truth, as a function of n.
/// p <= 4: joint gradient over edge weights s < t. Larger p: the largest
/// node-conditional gradient entry over all nodes.
inline RateCheckResult gradient_concentration_check(const TruthModel& truth, std::span<const Index> n_grid,
                                                    int replications, std::uint64_t seed,
                                                    const RateCheckOptions& opts = {})
{
    const ModelSpec model = detail::sampling_model(truth.model, opts.gibbs);
    model.validate();
    const Index p = truth.theta_star.p();
    const bool joint = p <= kMaxTensorDimension;
    JointMoments moments;
    if (joint) moments = joint_moments_exact(model, truth.theta_star);

    auto stats = detail::run_rate_grid(n_grid, replications, seed, opts.threads,
                                       [&](std::size_t k, std::size_t, std::uint64_t cell_seed) {
        GibbsConfig gc = opts.gibbs;
        gc.seed = cell_seed;
        const Dataset data = gibbs_states(truth, n_grid[k], gc);
        double worst = 0.0;
        if (joint) {
            const Matrix grad = moments.expectations - empirical_moments(model, data);
            for (Index s = 0; s < p; ++s)
                for (Index t = s + 1; t < p; ++t) worst = std::max(worst, std::abs(grad(s, t)));
        } else {
            const ConditionalTable table(model, data);
            for (Index s = 0; s < p; ++s)
                worst = std::max(worst, NodeConditional(table, s).gradient(node_weights(truth.theta_star, s))
                                            .cwiseAbs()
                                            .maxCoeff());
        }
        return worst;
    });
    return summarize_rate({n_grid.begin(), n_grid.end()}, std::move(stats), seed, opts.bootstrap_resamples);
}

enum class RateEstimator { nodewise_mle, joint_mle };

/// Estimation error against the truth as a function of n, with
/// lambda_n = lambda_constant * sqrt(ln p / n).
///   nodewise_mle: max_s || theta_hat_s - theta*_s ||_2 over all nodes
///   joint_mle:    Frobenius norm over off-diagonal entries
inline RateCheckResult error_scaling_check(const TruthModel& truth, RateEstimator estimator,
                                           std::span<const Index> n_grid, int replications, double lambda_constant,
                                           std::uint64_t seed, const RateCheckOptions& opts = {},
                                           SolveConfig solve = {})
{
    const ModelSpec model = detail::sampling_model(truth.model, opts.gibbs);
    model.validate();
    const Index p = truth.theta_star.p();
    std::vector<std::vector<char>> converged(n_grid.size(), std::vector<char>(static_cast<std::size_t>(replications), 1));

    auto stats = detail::run_rate_grid(n_grid, replications, seed, opts.threads,
                                       [&](std::size_t k, std::size_t r, std::uint64_t cell_seed) {
        GibbsConfig gc = opts.gibbs;
        gc.seed = cell_seed;
        const Index n = n_grid[k];
        const Dataset data = gibbs_states(truth, n, gc);
        SolveConfig cfg = solve;
        cfg.lambda = lambda_constant * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
        if (estimator == RateEstimator::joint_mle) {
            const FitResult fit = fit_joint_mle_exact(data, model, cfg);
            converged[k][r] = fit.converged;
            Matrix diff = fit.theta_hat.theta - truth.theta_star.theta;
            diff.diagonal().setZero();
            return diff.norm();
        }
        const ConditionalTable table(model, data);
        double worst = 0.0;
        for (Index s = 0; s < p; ++s) {
            const NodeFit fit = fit_nodewise_mle_exact(table, s, cfg);
            if (!fit.stats.converged) converged[k][r] = 0;
            worst = std::max(worst, (fit.weights - node_weights(truth.theta_star, s)).norm());
        }
        return worst;
    });
    RateCheckResult out = summarize_rate({n_grid.begin(), n_grid.end()}, std::move(stats), seed,
                                         opts.bootstrap_resamples);
    for (const auto& row : converged)
        for (char c : row) out.all_converged = out.all_converged && c;
    return out;
}

} // namespace semiefgm
