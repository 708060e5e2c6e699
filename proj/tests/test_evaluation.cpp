#include "support/oracles.hpp"

#include <semiefgm/evaluation.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace semiefgm;

namespace {

ParamMatrix with_edges(Index p, const std::vector<std::pair<Index, Index>>& edges, Role role, double w = 1.0)
{
    ParamMatrix m = ParamMatrix::identity(p, role);
    for (const auto& [s, t] : edges) m.theta(s, t) = m.theta(t, s) = w;
    return m;
}

ParamMatrix random_symmetric(Rng& rng, Index p, double density, Role role)
{
    ParamMatrix m = ParamMatrix::identity(p, role);
    for (Index s = 0; s < p; ++s)
        for (Index t = s + 1; t < p; ++t)
            if (rng.bernoulli(density)) m.theta(s, t) = m.theta(t, s) = rng.uniform(-1.0, 1.0);
    return m;
}

} // namespace

TEST(SupportMetrics, IdenticalSupportsArePerfect)
{
    const ParamMatrix truth = with_edges(5, {{0, 1}, {2, 4}}, Role::truth);
    const ParamMatrix est = with_edges(5, {{0, 1}, {2, 4}}, Role::estimate, 0.3);
    const SupportMetrics m = support_metrics(est, truth);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.fscore, 1.0);
}

TEST(SupportMetrics, EmptyEstimateScoresZero)
{
    const SupportMetrics m =
        support_metrics(ParamMatrix::identity(4, Role::estimate), with_edges(4, {{0, 1}}, Role::truth));
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.recall, 0.0);
    EXPECT_EQ(m.fscore, 0.0);
    EXPECT_EQ(m.fn, 1);
}

TEST(SupportMetrics, EightOfTenWithTwoFalse)
{
    std::vector<std::pair<Index, Index>> truth_edges, est_edges;
    for (Index t = 1; t <= 10; ++t) truth_edges.emplace_back(0, t);
    for (Index t = 1; t <= 8; ++t) est_edges.emplace_back(0, t);
    est_edges.emplace_back(1, 2);
    est_edges.emplace_back(3, 4);
    const SupportMetrics m =
        support_metrics(with_edges(11, est_edges, Role::estimate), with_edges(11, truth_edges, Role::truth));
    EXPECT_DOUBLE_EQ(m.precision, 0.8);
    EXPECT_DOUBLE_EQ(m.recall, 0.8);
    EXPECT_DOUBLE_EQ(m.fscore, 0.8);
    EXPECT_EQ(m.tp, 8);
    EXPECT_EQ(m.fp, 2);
    EXPECT_EQ(m.fn, 2);
}

TEST(SupportMetrics, ThresholdIsStrict)
{
    ParamMatrix est = ParamMatrix::identity(3, Role::estimate);
    est.theta(0, 1) = est.theta(1, 0) = 1e-3;
    EXPECT_EQ(support_metrics(est, with_edges(3, {{0, 1}}, Role::truth)).tp, 0);
}

TEST(SupportMetrics, DimensionMismatchRejected)
{
    EXPECT_THROW(support_metrics(ParamMatrix::identity(3, Role::estimate), ParamMatrix::identity(4, Role::truth)),
                 InvalidInput);
}

TEST(SupportMetricsProperty, TransposeInvariantAndFscoreBounds)
{
    Rng rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const Index p = 2 + static_cast<Index>(rng.below(12));
        const ParamMatrix truth = random_symmetric(rng, p, rng.uniform(0.05, 0.6), Role::truth);
        const ParamMatrix est = random_symmetric(rng, p, rng.uniform(0.0, 0.6), Role::estimate);
        const SupportMetrics m = support_metrics(est, truth);
        ParamMatrix est_t = est, truth_t = truth;
        est_t.theta.transposeInPlace();
        truth_t.theta.transposeInPlace();
        const SupportMetrics mt = support_metrics(est_t, truth_t);
        EXPECT_EQ(m.fscore, mt.fscore);
        EXPECT_EQ(m.tp, mt.tp);
        EXPECT_LE(m.fscore, std::min(2.0 * m.precision, 2.0 * m.recall) + 1e-15);
        if (m.tp + m.fp + m.fn > 0) {
            EXPECT_EQ(m.fscore == 0.0, m.tp == 0);
        }
        EXPECT_GE(m.fscore, 0.0);
        EXPECT_LE(m.fscore, 1.0);
    }
}

TEST(TopkLinkMetrics, SingleCategoryAlwaysPrecise)
{
    Rng rng(2);
    const ParamMatrix est = random_symmetric(rng, 6, 0.5, Role::estimate);
    const std::vector<int> labels(6, 7);
    for (Index k = 1; k <= 15; ++k) EXPECT_EQ(topk_link_metrics(est, labels, k).precision, 1.0);
}

TEST(TopkLinkMetrics, AllPairsGiveFullRecall)
{
    Rng rng(3);
    const ParamMatrix est = random_symmetric(rng, 6, 0.3, Role::estimate);
    const std::vector<int> labels{0, 1, 0, 2, 1, 0};
    EXPECT_EQ(topk_link_metrics(est, labels, 15).recall, 1.0);
}

TEST(TopkLinkMetrics, WithinCategoryPairsRankedFirst)
{
    ParamMatrix est = ParamMatrix::identity(4, Role::estimate);
    est.theta(0, 1) = est.theta(1, 0) = 0.9;
    est.theta(2, 3) = est.theta(3, 2) = -0.8;
    est.theta(0, 2) = est.theta(2, 0) = 0.1;
    const std::vector<int> labels{0, 0, 1, 1};
    const SupportMetrics m = topk_link_metrics(est, labels, 2);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
}

TEST(TopkLinkMetrics, TiesBrokenByPairOrder)
{
    const ParamMatrix est = ParamMatrix::identity(4, Role::estimate);
    // All pairs tie at zero, so the top two are (0,1) and (0,2).
    const std::vector<int> labels{0, 0, 1, 1};
    const SupportMetrics m = topk_link_metrics(est, labels, 2);
    EXPECT_EQ(m.tp, 1);
    EXPECT_EQ(m.fp, 1);
}

TEST(FrequencyMapTest, ZeroEstimatesGiveZeroMap)
{
    const std::vector<ParamMatrix> estimates(4, ParamMatrix::identity(5, Role::estimate));
    EXPECT_EQ(frequency_map(estimates), FrequencyMap::Zero(5, 5));
}

TEST(FrequencyMapTest, RepeatedEstimateGivesZeroOrR)
{
    Rng rng(4);
    const std::vector<ParamMatrix> estimates(10, random_symmetric(rng, 6, 0.4, Role::estimate));
    const FrequencyMap map = frequency_map(estimates);
    for (Index s = 0; s < 6; ++s)
        for (Index t = 0; t < 6; ++t) EXPECT_TRUE(map(s, t) == 0 || map(s, t) == 10);
}

TEST(FrequencyMapTest, CountsDetections)
{
    std::vector<ParamMatrix> estimates(10, ParamMatrix::identity(3, Role::estimate));
    for (int r : {1, 4, 8}) estimates[static_cast<std::size_t>(r)].theta(0, 2) = estimates[static_cast<std::size_t>(r)].theta(2, 0) = 0.5;
    const FrequencyMap map = frequency_map(estimates);
    EXPECT_EQ(map(0, 2), 3);
    EXPECT_EQ(map(2, 0), 3);
    EXPECT_EQ(map(0, 1), 0);
}

TEST(SupportKappa, AgreementExtremes)
{
    const ParamMatrix a = with_edges(4, {{0, 1}, {2, 3}}, Role::estimate);
    const ParamMatrix b = with_edges(4, {{0, 2}, {0, 3}, {1, 2}, {1, 3}}, Role::estimate);
    EXPECT_DOUBLE_EQ(support_kappa(a, a), 1.0);
    EXPECT_DOUBLE_EQ(support_kappa(a, b), -0.8);
    EXPECT_EQ(support_kappa(ParamMatrix::identity(4, Role::estimate), ParamMatrix::identity(4, Role::estimate)), 0.0);
}

TEST(Median, OddAndEvenCounts)
{
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
}

TEST(SummarizeRateProperty, SlopeMatchesClosedFormLeastSquares)
{
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t cells = 2 + rng.below(5);
        std::vector<Index> ns;
        std::vector<std::vector<double>> stats;
        Index n = 50 + static_cast<Index>(rng.below(50));
        for (std::size_t k = 0; k < cells; ++k) {
            ns.push_back(n);
            n = n * 2 + static_cast<Index>(rng.below(10));
            std::vector<double> reps;
            for (int r = 0; r < 7; ++r) reps.push_back(rng.uniform(0.01, 2.0));
            stats.push_back(reps);
        }
        std::vector<double> lx, ly;
        for (std::size_t k = 0; k < cells; ++k) {
            std::vector<double> sorted = stats[k];
            std::sort(sorted.begin(), sorted.end());
            lx.push_back(std::log(static_cast<double>(ns[k])));
            ly.push_back(std::log(sorted[3]));
        }
        const RateCheckResult r = summarize_rate(ns, stats, 9, 50);
        EXPECT_NEAR(r.fitted_slope, oracle::ols_slope(lx, ly), 1e-10);
        EXPECT_LE(r.slope_ci[0], r.slope_ci[1]);
    }
}

TEST(SummarizeRate, NonIncreasingSizesRejected)
{
    EXPECT_THROW(summarize_rate({100, 100}, {{1.0}, {1.0}}, 1), InvalidInput);
}

TEST(GradientConcentration, UniformModelMatchesQuadratureDeviation)
{
    ModelSpec model;
    model.base_coeff = 0.0;
    const TruthModel truth = make_chain(3, 0.0, model);
    RateCheckOptions opts;
    opts.gibbs.grid_points = 201;
    opts.gibbs.burn_in = 10;
    opts.gibbs.thin = 1;
    opts.bootstrap_resamples = 10;
    const std::vector<Index> grid{20, 40};
    const RateCheckResult r = gradient_concentration_check(truth, grid, 3, 123, opts);

    const double mean_kernel =
        oracle::trapezoid2([](double a, double b) { return std::exp(-(a - b) * (a - b)); }, -10.0, 10.0, 201) / 400.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (std::size_t rep = 0; rep < 3; ++rep) {
            GibbsConfig gc = opts.gibbs;
            gc.seed = derive_seed(123, {static_cast<std::uint64_t>(grid[k]), rep});
            const Dataset data = gibbs_states(truth, grid[k], gc);
            double worst = 0.0;
            for (Index s = 0; s < 3; ++s)
                for (Index t = s + 1; t < 3; ++t) {
                    double mean = 0.0;
                    for (Index i = 0; i < data.n(); ++i) {
                        const double d = data.scalar(i, s) - data.scalar(i, t);
                        mean += std::exp(-d * d);
                    }
                    worst = std::max(worst, std::abs(mean / static_cast<double>(data.n()) - mean_kernel));
                }
            EXPECT_NEAR(r.statistics[k][rep], worst, 1e-10);
        }
}

TEST(GradientConcentration, MedianShrinksWithSampleSize)
{
    RateCheckOptions opts;
    opts.gibbs.grid_points = 201;
    opts.bootstrap_resamples = 50;
    const std::vector<Index> grid{100, 400, 1600};
    const RateCheckResult r = gradient_concentration_check(make_chain(3, 1.0), grid, 15, 7, opts);
    EXPECT_TRUE(r.medians_decreasing());
    EXPECT_LT(r.fitted_slope, 0.0);
}

TEST(ErrorScaling, EdgelessTruthGivesSolverFloor)
{
    RateCheckOptions opts;
    opts.gibbs.grid_points = 201;
    opts.bootstrap_resamples = 20;
    const std::vector<Index> grid{200, 400};
    SolveConfig solve;
    const RateCheckResult r =
        error_scaling_check(make_chain(3, 0.0), RateEstimator::nodewise_mle, grid, 3, 2.0, 11, opts, solve);
    for (double m : r.statistic_medians) EXPECT_LE(m, 10.0 * solve.grad_tol);
    EXPECT_TRUE(r.all_converged);
}

TEST(ErrorScaling, LargestSampleHasSmallestError)
{
    RateCheckOptions opts;
    opts.gibbs.grid_points = 201;
    opts.bootstrap_resamples = 20;
    const std::vector<Index> grid{150, 600};
    const RateCheckResult r =
        error_scaling_check(make_chain(4, 0.8), RateEstimator::nodewise_mle, grid, 7, 0.5, 13, opts);
    EXPECT_LT(r.statistic_medians.back(), r.statistic_medians.front());
}
