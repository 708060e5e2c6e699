#include "support/oracles.hpp"

#include <semiefgm/kernel.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace semiefgm;

namespace {

double eval1(const KernelSpec& k, double x, double y)
{
    const double a[1] = {x}, b[1] = {y};
    return eval_kernel(k, a, b);
}

Dataset scalar_row(std::initializer_list<double> values)
{
    Matrix x(1, static_cast<Index>(values.size()));
    Index j = 0;
    for (double v : values) x(0, j++) = v;
    return Dataset::from_scalar(x);
}

Vector unit_vector(Rng& rng, Index d)
{
    Vector v(d);
    for (Index k = 0; k < d; ++k) v(k) = rng.normal();
    return v / v.norm();
}

} // namespace

TEST(EvalKernel, HeatAtIdenticalPointsIsOne) { EXPECT_EQ(eval1(KernelSpec::heat(1.0), 3.7, 3.7), 1.0); }

TEST(EvalKernel, LinearIsDotProduct) { EXPECT_EQ(eval1(KernelSpec::linear(), 2.0, 3.0), 6.0); }

TEST(EvalKernel, PolynomialOfHalfInnerProduct)
{
    const KernelSpec k = KernelSpec::polynomial(1.0, 2, 2);
    const double x[2] = {1.0, 0.0}, y[2] = {0.5, 0.7};
    EXPECT_DOUBLE_EQ(eval_kernel(k, x, y), 2.25);
}

TEST(EvalKernel, HeatUsesSquaredDistanceOverSigmaSquared)
{
    EXPECT_DOUBLE_EQ(eval1(KernelSpec::heat(2.0), 0.0, 1.0), std::exp(-0.25));
    const KernelSpec k = KernelSpec::heat(1.0, 2);
    const double x[2] = {0.0, 0.0}, y[2] = {1.0, 1.0};
    EXPECT_DOUBLE_EQ(eval_kernel(k, x, y), std::exp(-2.0));
}

TEST(EvalKernel, DimensionMismatchIsInvalidInput)
{
    const KernelSpec k = KernelSpec::heat(1.0, 3);
    const double x[2] = {0.0, 1.0}, y[3] = {0.0, 1.0, 2.0};
    EXPECT_THROW(eval_kernel(k, x, y), InvalidInput);
    EXPECT_THROW(eval_kernel(k, y, x), InvalidInput);
}

TEST(EvalKernel, InvalidSpecsRejected)
{
    EXPECT_THROW(KernelSpec::heat(0.0).validate(), InvalidInput);
    EXPECT_THROW(KernelSpec::polynomial(-1.0, 2).validate(), InvalidInput);
    EXPECT_THROW(KernelSpec::polynomial(1.0, 0).validate(), InvalidInput);
}

TEST(EvalKernel, SymmetricExactlyAndHeatInUnitInterval)
{
    Rng rng(11);
    const std::vector<KernelSpec> specs{KernelSpec::heat(0.5, 3), KernelSpec::heat(2.0, 3),
                                        KernelSpec::polynomial(0.5, 3, 3), KernelSpec::linear(3)};
    for (int trial = 0; trial < 500; ++trial) {
        const Vector x = gen::gaussian_matrix(rng, 3, 1) * 4.0;
        const Vector y = gen::gaussian_matrix(rng, 3, 1) * 4.0;
        for (const auto& k : specs) {
            const double xy = eval_kernel(k, {x.data(), 3}, {y.data(), 3});
            const double yx = eval_kernel(k, {y.data(), 3}, {x.data(), 3});
            EXPECT_EQ(xy, yx);
            if (k.family == KernelFamily::heat) {
                EXPECT_GE(xy, 0.0);  // exp underflows to 0 far apart
                EXPECT_LE(xy, 1.0);
            }
        }
    }
}

TEST(GramMatrix, IdenticalPointsGiveAllOnes)
{
    const Matrix g = gram_matrix(KernelSpec::heat(1.0), scalar_row({0.0, 0.0, 0.0}), 0);
    EXPECT_EQ(g, Matrix::Ones(3, 3));
}

TEST(GramMatrix, LinearPair)
{
    const Matrix g = gram_matrix(KernelSpec::linear(), scalar_row({1.0, -1.0}), 0);
    Matrix expected(2, 2);
    expected << 1, -1, -1, 1;
    EXPECT_EQ(g, expected);
}

TEST(GramMatrix, HeatEntriesInPlace)
{
    const Matrix g = gram_matrix(KernelSpec::heat(1.0), scalar_row({0.0, 1.0, 2.0}), 0);
    const double e1 = std::exp(-1.0), e4 = std::exp(-4.0);
    Matrix expected(3, 3);
    expected << 1, e1, e4, e1, 1, e1, e4, e1, 1;
    EXPECT_LE((g - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GramMatrix, FeatureDimMismatchRejected)
{
    EXPECT_THROW(gram_matrix(KernelSpec::heat(1.0, 2), scalar_row({0.0, 1.0}), 0), InvalidInput);
}

TEST(GramMatrixProperty, PsdForRandomRowsAndSpecs)
{
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Index p = 2 + static_cast<Index>(rng.below(12));
        const Index d = 1 + static_cast<Index>(rng.below(5));
        Dataset data(1, p, d);
        for (Index s = 0; s < p; ++s) {
            const Vector v = unit_vector(rng, d) * (d == 1 ? rng.uniform(-10.0, 10.0) : 1.0);
            for (Index k = 0; k < d; ++k) data.variate(0, s)[static_cast<std::size_t>(k)] = v(k);
        }
        const std::vector<KernelSpec> specs{
            KernelSpec::heat(rng.uniform(0.2, 3.0), static_cast<int>(d)),
            KernelSpec::polynomial(rng.uniform(0.0, 2.0), 1 + static_cast<int>(rng.below(4)), static_cast<int>(d)),
            KernelSpec::linear(static_cast<int>(d))};
        for (const auto& k : specs) {
            const Matrix g = gram_matrix(k, data, 0);
            EXPECT_EQ(symmetry_error(g), 0.0);
            EXPECT_GE(min_eigenvalue(g), -1e-8 * std::max(1.0, g.cwiseAbs().maxCoeff()));
        }
    }
}

TEST(AverageGram, SingleSampleEqualsGram)
{
    const Dataset d = scalar_row({0.3, -1.2, 4.0});
    const KernelSpec k = KernelSpec::heat(1.5);
    const GramAverage avg = average_gram(k, d);
    EXPECT_EQ(avg.n_used, 1);
    EXPECT_LE((avg.matrix - gram_matrix(k, d, 0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AverageGram, TwoSamplesAverageEntrywise)
{
    Matrix x(2, 3);
    x << 0.0, 1.0, 2.0, -1.0, 0.5, 3.0;
    const Dataset d = Dataset::from_scalar(x);
    const KernelSpec k = KernelSpec::heat(1.0);
    const Matrix expected = 0.5 * (gram_matrix(k, d, 0) + gram_matrix(k, d, 1));
    EXPECT_LE((average_gram(k, d).matrix - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AverageGram, EmptyDatasetRejected) { EXPECT_THROW(average_gram(KernelSpec::heat(1.0), Dataset{}), InvalidInput); }

TEST(AverageGram, UniformPairsMatchQuadratureExpectation)
{
    Rng rng(2024);
    const Index n = 500;
    Matrix x(n, 2);
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform(-10.0, 10.0);
        x(i, 1) = rng.uniform(-10.0, 10.0);
    }
    const GramAverage avg = average_gram(KernelSpec::heat(1.0), Dataset::from_scalar(x));
    double sum = 0.0, sum2 = 0.0;
    for (Index i = 0; i < n; ++i) {
        const double v = std::exp(-(x(i, 0) - x(i, 1)) * (x(i, 0) - x(i, 1)));
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
    const double truth =
        oracle::trapezoid2([](double a, double b) { return std::exp(-(a - b) * (a - b)); }, -10.0, 10.0, 801) /
        400.0;
    EXPECT_LE(std::abs(avg.matrix(0, 1) - truth), 3.0 * se);
}

TEST(AverageGramProperty, SymmetricPsdAndStableUnderSelfConcatenation)
{
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        const Index n = 1 + static_cast<Index>(rng.below(40));
        const Index p = 2 + static_cast<Index>(rng.below(10));
        Matrix x(n, p);
        for (Index i = 0; i < n; ++i)
            for (Index s = 0; s < p; ++s) x(i, s) = rng.uniform(-10.0, 10.0);
        const Dataset d = Dataset::from_scalar(x);
        const KernelSpec k = KernelSpec::heat(rng.uniform(0.3, 3.0));
        const GramAverage a = average_gram(k, d);
        EXPECT_LE(symmetry_error(a.matrix), 1e-12);
        EXPECT_GE(min_eigenvalue(a.matrix), -1e-8);
        const GramAverage twice = average_gram(k, d.concat(d));
        EXPECT_EQ(twice.n_used, 2 * n);
        EXPECT_LE((twice.matrix - a.matrix).cwiseAbs().maxCoeff(), 1e-12);
    }
}
