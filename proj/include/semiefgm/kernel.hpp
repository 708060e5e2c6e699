#pragma once

#include "dataset.hpp"
#include "errors.hpp"
#include "linalg.hpp"

#include <cmath>
#include <span>
#include <string>

namespace semiefgm {

enum class KernelFamily { linear, heat, polynomial };

inline std::string to_string(KernelFamily f)
{
    switch (f) {
    case KernelFamily::linear: return "linear";
    case KernelFamily::heat: return "heat";
    case KernelFamily::polynomial: return "polynomial";
    }
    return "unknown";
}

inline KernelFamily kernel_family_from_string(const std::string& name)
{
    if (name == "linear") return KernelFamily::linear;
    if (name == "heat") return KernelFamily::heat;
    if (name == "polynomial") return KernelFamily::polynomial;
    throw InvalidInput("unknown kernel family '" + name + "'");
}

/// Pairwise sufficient statistic phi(x, y).
///   linear:     x'y
///   heat:       exp(-|x - y|^2 / sigma^2)
///   polynomial: (beta + x'y)^alpha
struct KernelSpec {
    KernelFamily family = KernelFamily::heat;
    double sigma = 1.0;
    double beta = 1.0;
    int alpha = 2;
    int feature_dim = 1;

    static KernelSpec linear(int d = 1) { return {KernelFamily::linear, 1.0, 0.0, 1, d}; }
    static KernelSpec heat(double sigma, int d = 1) { return {KernelFamily::heat, sigma, 0.0, 1, d}; }
    static KernelSpec polynomial(double beta, int alpha, int d = 1)
    {
        return {KernelFamily::polynomial, 1.0, beta, alpha, d};
    }

    void validate() const
    {
        detail::require(feature_dim >= 1, "KernelSpec: feature_dim must be positive");
        if (family == KernelFamily::heat) detail::require(sigma > 0.0, "KernelSpec: heat kernel needs sigma > 0");
        if (family == KernelFamily::polynomial) {
            detail::require(alpha >= 1, "KernelSpec: polynomial kernel needs alpha >= 1");
            detail::require(beta >= 0.0, "KernelSpec: polynomial kernel needs beta >= 0");
        }
    }
};

namespace detail {

inline double eval_kernel_unchecked(const KernelSpec& spec, const double* x, const double* y, Index d)
{
    switch (spec.family) {
    case KernelFamily::linear: {
        double dot = 0.0;
        for (Index k = 0; k < d; ++k) dot += x[k] * y[k];
        return dot;
    }
    case KernelFamily::heat: {
        double sq = 0.0;
        for (Index k = 0; k < d; ++k) {
            const double diff = x[k] - y[k];
            sq += diff * diff;
        }
        return std::exp(-sq / (spec.sigma * spec.sigma));
    }
    case KernelFamily::polynomial: {
        double dot = 0.0;
        for (Index k = 0; k < d; ++k) dot += x[k] * y[k];
        const double base = spec.beta + dot;
        double out = 1.0;
        for (int a = 0; a < spec.alpha; ++a) out *= base;
        return out;
    }
    }
    return 0.0;
}

/// Scalar specialisation used by the quadrature and sampler inner loops.
inline double eval_scalar(const KernelSpec& spec, double x, double y)
{
    return eval_kernel_unchecked(spec, &x, &y, 1);
}

} // namespace detail

inline double eval_kernel(const KernelSpec& spec, std::span<const double> x, std::span<const double> y)
{
    const auto d = static_cast<std::size_t>(spec.feature_dim);
    if (x.size() != d || y.size() != d)
        throw InvalidInput("eval_kernel: variate length does not match feature_dim " + std::to_string(d));
    return detail::eval_kernel_unchecked(spec, x.data(), y.data(), spec.feature_dim);
}

/// p x p kernel matrix of one sample row.
inline Matrix gram_matrix(const KernelSpec& spec, const Dataset& data, Index row)
{
    if (data.feature_dim() != spec.feature_dim)
        throw InvalidInput("gram_matrix: dataset feature_dim does not match kernel");
    const Index p = data.p();
    Matrix g(p, p);
    for (Index s = 0; s < p; ++s) {
        const auto xs = data.variate(row, s);
        for (Index t = s; t < p; ++t) {
            const double v = detail::eval_kernel_unchecked(spec, xs.data(), data.variate(row, t).data(),
                                                           spec.feature_dim);
            g(s, t) = v;
            g(t, s) = v;
        }
    }
    return g;
}

/// Sample-averaged kernel matrix Phi_n = (1/n) sum_i Phi(X^(i)).
struct GramAverage {
    Matrix matrix;
    Index n_used = 0;

    Index p() const { return matrix.rows(); }
};

inline GramAverage average_gram(const KernelSpec& spec, const Dataset& data)
{
    spec.validate();
    if (data.empty()) throw InvalidInput("average_gram: empty dataset");
    if (data.feature_dim() != spec.feature_dim)
        throw InvalidInput("average_gram: dataset feature_dim does not match kernel");
    const Index p = data.p();
    const Index n = data.n();
    Matrix sum = Matrix::Zero(p, p);
    for (Index i = 0; i < n; ++i)
        for (Index s = 0; s < p; ++s) {
            const auto xs = data.variate(i, s);
            for (Index t = s; t < p; ++t)
                sum(s, t) += detail::eval_kernel_unchecked(spec, xs.data(), data.variate(i, t).data(),
                                                           spec.feature_dim);
        }
    sum /= static_cast<double>(n);
    for (Index s = 0; s < p; ++s)
        for (Index t = s + 1; t < p; ++t) sum(t, s) = sum(s, t);
    return {std::move(sum), n};
}

} // namespace semiefgm
