#pragma once

#include "dataset.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "param_matrix.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace semiefgm {

/// How a scalar state u becomes the variate the kernel sees.
///   identity:      the kernel acts on u directly (feature_dim must be 1)
///   unit_monomial: u is mapped to normalize(1, v, v^2, ..., v^(d-1)) with
///                  v = u / max(|lo|, |hi|), a unit vector in R^d
enum class FeatureLift { identity, unit_monomial };

inline std::string to_string(FeatureLift l) { return l == FeatureLift::identity ? "identity" : "unit_monomial"; }

inline FeatureLift feature_lift_from_string(const std::string& name)
{
    if (name == "identity") return FeatureLift::identity;
    if (name == "unit_monomial") return FeatureLift::unit_monomial;
    throw InvalidInput("unknown feature lift '" + name + "'");
}

/// A Semi-EFGM on a bounded box with scalar node states:
///   log P(x) = sum_s theta_ss f(x_s) + sum_{s<t} theta_st phi(x_s, x_t) - A(theta),
/// with base measure f(u) = -base_coeff * phi(u, u). Integrals use the
/// composite trapezoid rule on grid_points uniformly spaced abscissae.
struct ModelSpec {
    KernelSpec kernel = KernelSpec::heat(1.0);
    FeatureLift lift = FeatureLift::identity;
    double base_coeff = 0.5;
    double domain_lo = -10.0;
    double domain_hi = 10.0;
    int grid_points = 401;

    void validate() const
    {
        kernel.validate();
        detail::require(domain_lo < domain_hi, "ModelSpec: domain_lo must be below domain_hi");
        detail::require(grid_points >= 51, "ModelSpec: grid_points must be at least 51");
        detail::require(base_coeff >= 0.0, "ModelSpec: base_coeff must be nonnegative");
        if (lift == FeatureLift::identity)
            detail::require(kernel.feature_dim == 1, "ModelSpec: identity lift needs feature_dim 1");
    }

    double spacing() const { return (domain_hi - domain_lo) / (grid_points - 1); }

    Vector grid() const
    {
        Vector g(grid_points);
        const double h = spacing();
        for (int k = 0; k < grid_points; ++k) g(k) = domain_lo + h * k;
        g(grid_points - 1) = domain_hi;
        return g;
    }

    Vector trapezoid_weights() const
    {
        Vector w = Vector::Constant(grid_points, spacing());
        w(0) *= 0.5;
        w(grid_points - 1) *= 0.5;
        return w;
    }

    bool in_domain(double u) const { return u >= domain_lo && u <= domain_hi; }

    Index feature_dim() const { return kernel.feature_dim; }

    void lift_into(double u, double* out) const
    {
        if (lift == FeatureLift::identity) {
            out[0] = u;
            return;
        }
        const double scale = std::max(std::abs(domain_lo), std::abs(domain_hi));
        const double v = u / scale;
        double power = 1.0;
        double norm_sq = 0.0;
        for (int k = 0; k < kernel.feature_dim; ++k) {
            out[k] = power;
            norm_sq += power * power;
            power *= v;
        }
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (int k = 0; k < kernel.feature_dim; ++k) out[k] *= inv;
    }

    /// Pairwise statistic on scalar states.
    double phi(double u, double v) const
    {
        if (lift == FeatureLift::identity) return detail::eval_scalar(kernel, u, v);
        std::vector<double> a(kernel.feature_dim), b(kernel.feature_dim);
        lift_into(u, a.data());
        lift_into(v, b.data());
        return detail::eval_kernel_unchecked(kernel, a.data(), b.data(), kernel.feature_dim);
    }

    double base(double u) const { return -base_coeff * phi(u, u); }
};

/// Grid-side cache for one ModelSpec: abscissae, log trapezoid weights,
/// base measure values and (for lifted models) the lifted grid points.
class GridKernel {
public:
    explicit GridKernel(const ModelSpec& model) : model_(model)
    {
        model_.validate();
        grid_ = model_.grid();
        log_weights_ = model_.trapezoid_weights().array().log();
        const Index d = model_.feature_dim();
        lifted_.resize(grid_.size() * d);
        base_.resize(grid_.size());
        for (Index g = 0; g < grid_.size(); ++g) {
            model_.lift_into(grid_(g), lifted_.data() + g * d);
            base_(g) = model_.base(grid_(g));
        }
    }

    const ModelSpec& model() const { return model_; }
    Index size() const { return grid_.size(); }
    const Vector& grid() const { return grid_; }
    const Vector& log_weights() const { return log_weights_; }
    const Vector& base() const { return base_; }

    /// out(g) = phi(grid_g, v) for every grid point.
    void column(double v, double* out) const
    {
        const Index G = size();
        const auto& k = model_.kernel;
        if (model_.lift == FeatureLift::identity) {
            switch (k.family) {
            case KernelFamily::heat: {
                const double inv = 1.0 / (k.sigma * k.sigma);
                for (Index g = 0; g < G; ++g) {
                    const double diff = grid_(g) - v;
                    out[g] = std::exp(-diff * diff * inv);
                }
                return;
            }
            default:
                for (Index g = 0; g < G; ++g) out[g] = detail::eval_scalar(k, grid_(g), v);
                return;
            }
        }
        const Index d = model_.feature_dim();
        std::vector<double> lv(d);
        model_.lift_into(v, lv.data());
        for (Index g = 0; g < G; ++g)
            out[g] = detail::eval_kernel_unchecked(k, lifted_.data() + g * d, lv.data(), d);
    }

    /// G x G matrix of phi between grid points.
    Matrix pair_table() const
    {
        const Index G = size();
        Matrix table(G, G);
        for (Index b = 0; b < G; ++b) column(grid_(b), table.col(b).data());
        return table;
    }

    /// Node-conditional energies on the grid, including log trapezoid weights:
    ///   e_g = log w_g + f(g) + sum_j weights_j phi(g, neighbors_j).
    Vector conditional_energies(std::span<const double> weights, std::span<const double> neighbors) const
    {
        detail::require(weights.size() == neighbors.size(), "conditional: weights/neighbors length mismatch");
        Vector e = log_weights_ + base_;
        Vector col(size());
        for (std::size_t j = 0; j < weights.size(); ++j) {
            if (weights[j] == 0.0) continue;
            column(neighbors[j], col.data());
            e.noalias() += weights[j] * col;
        }
        return e;
    }

private:
    ModelSpec model_;
    Vector grid_;
    Vector log_weights_;
    Vector base_;
    std::vector<double> lifted_;
};

/// Discretised node-conditional: probs(g) is the trapezoid-rule mass of
/// grid point g, so probs sums to one and expectations under it equal the
/// quadrature expectations.
struct GridPmf {
    Vector support;
    Vector probs;

    double mean() const { return support.dot(probs); }

    double expect(const Vector& values) const { return values.dot(probs); }
};

inline double unnormalized_log_joint(const ModelSpec& model, const ParamMatrix& theta, std::span<const double> x)
{
    const Index p = theta.p();
    detail::require(static_cast<Index>(x.size()) == p, "unnormalized_log_joint: sample length != p");
    for (double u : x)
        if (!model.in_domain(u)) throw InvalidInput("unnormalized_log_joint: sample outside the model domain");
    double out = 0.0;
    for (Index s = 0; s < p; ++s) {
        out += theta.theta(s, s) * model.base(x[s]);
        for (Index t = s + 1; t < p; ++t)
            if (theta.theta(s, t) != 0.0) out += theta.theta(s, t) * model.phi(x[s], x[t]);
    }
    return out;
}

/// D(x_rest; theta_s) = log of the trapezoid integral of
/// exp{f(u) + sum_j weights_j phi(u, neighbors_j)} over the domain.
inline double conditional_log_partition(const ModelSpec& model, std::span<const double> weights,
                                        std::span<const double> neighbors)
{
    const GridKernel grid(model);
    return log_sum_exp(grid.conditional_energies(weights, neighbors));
}

inline GridPmf conditional_pmf(const ModelSpec& model, std::span<const double> weights,
                               std::span<const double> neighbors)
{
    const GridKernel grid(model);
    const Vector e = grid.conditional_energies(weights, neighbors);
    Vector probs = (e.array() - e.maxCoeff()).exp();
    probs /= probs.sum();
    return {grid.grid(), std::move(probs)};
}

/// Log-partition and first moments of the joint, by tensor trapezoid rule.
/// expectations(s,t) = E[phi(X_s, X_t)] for s != t and E[f(X_s)] on the diagonal.
struct JointMoments {
    double log_partition = 0.0;
    Matrix expectations;
};

inline constexpr Index kMaxTensorDimension = 4;

namespace detail {

class TensorQuadrature {
public:
    TensorQuadrature(const ModelSpec& model, const ParamMatrix& theta, bool with_moments)
        : grid_(model), theta_(theta.theta), moments_(with_moments)
    {
        p_ = theta_.rows();
        if (p_ > kMaxTensorDimension)
            throw UnsupportedOperation("tensor quadrature is limited to p <= 4 (got p = " + std::to_string(p_) + ")");
        detail::require(p_ >= 1, "tensor quadrature: empty parameter matrix");
        detail::require(symmetry_error(theta_) <= 1e-12, "tensor quadrature: theta must be symmetric");
        G_ = grid_.size();
        pair_ = grid_.pair_table();
        node_.resize(p_);
        for (Index s = 0; s < p_; ++s) node_[s] = grid_.log_weights() + theta_(s, s) * grid_.base();
    }

    JointMoments run()
    {
        // Upper bound on the energy for the exp shift; refined if it proves too loose.
        double bound = 0.0;
        const double pmax = pair_.maxCoeff();
        const double pmin = pair_.minCoeff();
        for (Index s = 0; s < p_; ++s) {
            bound += node_[s].maxCoeff();
            for (Index t = s + 1; t < p_; ++t) bound += theta_(s, t) >= 0 ? theta_(s, t) * pmax : theta_(s, t) * pmin;
        }
        pass(bound);
        if (!(total_ > 0.0) || std::log(total_) < -500.0) pass(max_energy_);
        JointMoments out;
        out.log_partition = shift_ + std::log(total_);
        if (moments_) {
            out.expectations = acc_ / total_;
            for (Index s = 0; s < p_; ++s)
                for (Index t = 0; t < s; ++t) out.expectations(s, t) = out.expectations(t, s);
        }
        return out;
    }

private:
    void pass(double shift)
    {
        shift_ = shift;
        total_ = 0.0;
        max_energy_ = -std::numeric_limits<double>::infinity();
        acc_ = Matrix::Zero(p_, p_);
        idx_.fill(0);
        recurse(0, 0.0);
    }

    void recurse(Index level, double partial)
    {
        const Index last = p_ - 1;
        if (level == last) {
            Vector e = node_[last].array() + (partial - shift_);
            for (Index j = 0; j < last; ++j)
                if (theta_(j, last) != 0.0) e.noalias() += theta_(j, last) * pair_.col(idx_[j]);
            max_energy_ = std::max(max_energy_, e.maxCoeff() + shift_);
            const Vector w = e.array().exp();
            const double wsum = w.sum();
            total_ += wsum;
            if (moments_) {
                acc_(last, last) += w.dot(grid_.base());
                for (Index j = 0; j < last; ++j) {
                    acc_(j, last) += w.dot(pair_.col(idx_[j]));
                    acc_(j, j) += wsum * grid_.base()(idx_[j]);
                    for (Index k = j + 1; k < last; ++k) acc_(j, k) += wsum * pair_(idx_[j], idx_[k]);
                }
            }
            return;
        }
        for (Index g = 0; g < G_; ++g) {
            idx_[level] = g;
            double e = partial + node_[level](g);
            for (Index j = 0; j < level; ++j) e += theta_(j, level) * pair_(idx_[j], g);
            recurse(level + 1, e);
        }
    }

    GridKernel grid_;
    Matrix theta_;
    bool moments_;
    Index p_ = 0;
    Index G_ = 0;
    Matrix pair_;
    std::vector<Vector> node_;
    std::array<Index, kMaxTensorDimension> idx_{};
    Matrix acc_;
    double shift_ = 0.0;
    double total_ = 0.0;
    double max_energy_ = 0.0;
};

inline void require_scalar(const Dataset& data, const char* op)
{
    if (!data.is_scalar())
        throw UnsupportedOperation(std::string(op) + ": quadrature operations need scalar variates");
}

} // namespace detail

inline JointMoments joint_moments_exact(const ModelSpec& model, const ParamMatrix& theta)
{
    return detail::TensorQuadrature(model, theta, true).run();
}

/// A(theta) by tensor trapezoid rule; p <= 4.
inline double joint_log_partition_exact(const ModelSpec& model, const ParamMatrix& theta)
{
    return detail::TensorQuadrature(model, theta, false).run().log_partition;
}

/// Empirical first moments: phi means off the diagonal, f means on it.
/// Optional sample weights must sum to one; empty means uniform 1/n.
inline Matrix empirical_moments(const ModelSpec& model, const Dataset& data, std::span<const double> weights = {})
{
    detail::require_scalar(data, "empirical_moments");
    const Index n = data.n();
    const Index p = data.p();
    detail::require(weights.empty() || static_cast<Index>(weights.size()) == n,
                    "empirical_moments: weight count != sample count");
    Matrix m = Matrix::Zero(p, p);
    for (Index i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 / static_cast<double>(n) : weights[i];
        for (Index s = 0; s < p; ++s) {
            const double xs = data.scalar(i, s);
            m(s, s) += w * model.base(xs);
            for (Index t = s + 1; t < p; ++t) m(s, t) += w * model.phi(xs, data.scalar(i, t));
        }
    }
    for (Index s = 0; s < p; ++s)
        for (Index t = 0; t < s; ++t) m(s, t) = m(t, s);
    return m;
}

/// Gradient of the joint negative log-likelihood:
///   (s,t): -(1/n) sum_i phi(x_s^i, x_t^i) + E_theta[phi(X_s, X_t)],
/// and the theta_ss derivative on the diagonal.
inline Matrix joint_gradient_exact(const ModelSpec& model, const ParamMatrix& theta, const Dataset& data,
                                   std::span<const double> sample_weights = {})
{
    detail::require_scalar(data, "joint_gradient_exact");
    detail::require(data.p() == theta.p(), "joint_gradient_exact: dataset p != theta p");
    const JointMoments moments = joint_moments_exact(model, theta);
    return moments.expectations - empirical_moments(model, data, sample_weights);
}

/// L(theta) = -(1/n) sum_i log P(x^i; theta).
inline double joint_negloglik_exact(const ModelSpec& model, const ParamMatrix& theta, const Dataset& data)
{
    detail::require_scalar(data, "joint_negloglik_exact");
    const double a = joint_log_partition_exact(model, theta);
    double sum = 0.0;
    for (Index i = 0; i < data.n(); ++i) sum += unnormalized_log_joint(model, theta, data.row(i));
    return a - sum / static_cast<double>(data.n());
}

/// Per-sample kernel columns phi(grid_g, x_t^i), shared by every node's
/// conditional likelihood on one dataset. Block i is a column-major G x p matrix.
class ConditionalTable {
public:
    ConditionalTable(const ModelSpec& model, const Dataset& data) : grid_(model), data_(data)
    {
        detail::require_scalar(data, "ConditionalTable");
        for (Index i = 0; i < data.n(); ++i)
            for (Index t = 0; t < data.p(); ++t)
                if (!model.in_domain(data.scalar(i, t)))
                    throw InvalidInput("ConditionalTable: sample outside the model domain");
        const Index G = grid_.size();
        const Index p = data.p();
        table_.resize(static_cast<std::size_t>(data.n() * p * G));
        for (Index i = 0; i < data.n(); ++i)
            for (Index t = 0; t < p; ++t) grid_.column(data.scalar(i, t), table_.data() + (i * p + t) * G);
    }

    const GridKernel& grid() const { return grid_; }
    const Dataset& data() const { return data_; }

    Eigen::Map<const Matrix> block(Index i) const
    {
        const Index G = grid_.size();
        return {table_.data() + i * data_.p() * G, G, data_.p()};
    }

private:
    GridKernel grid_;
    const Dataset& data_;
    std::vector<double> table_;
};

/// Node-conditional negative log-likelihood of node s,
///   L~(theta_s) = (1/n) sum_i { -f(x_s^i) - sum_t theta_st phi(x_s^i, x_t^i) + D(x_rest^i; theta_s) },
/// with theta_s indexed over t != s in ascending order.
class NodeConditional {
public:
    NodeConditional(const ConditionalTable& table, Index s) : table_(table), s_(s)
    {
        const Dataset& data = table.data();
        const Index p = data.p();
        detail::require(s >= 0 && s < p, "NodeConditional: node index out of range");
        others_ = other_nodes(s, p);
        const ModelSpec& model = table.grid().model();
        obs_phi_ = Vector::Zero(p - 1);
        obs_base_ = 0.0;
        for (Index i = 0; i < data.n(); ++i) {
            const double xs = data.scalar(i, s);
            obs_base_ += model.base(xs);
            for (Index j = 0; j < p - 1; ++j) obs_phi_(j) += model.phi(xs, data.scalar(i, others_[j]));
        }
        obs_phi_ /= static_cast<double>(data.n());
        obs_base_ /= static_cast<double>(data.n());
        offset_ = table.grid().log_weights() + table.grid().base();
    }

    Index dim() const { return static_cast<Index>(others_.size()); }
    Index node() const { return s_; }
    const std::vector<Index>& others() const { return others_; }

    double value(const Vector& theta_s) const
    {
        return evaluate(theta_s, nullptr, nullptr);
    }

    double value_and_gradient(const Vector& theta_s, Vector& grad) const
    {
        return evaluate(theta_s, &grad, nullptr);
    }

    /// Prop.-2 Hessian: average conditional covariance of {phi(X_s, x_t^i)}_t.
    Matrix hessian(const Vector& theta_s) const
    {
        Matrix h;
        evaluate(theta_s, nullptr, &h);
        return h;
    }

    Vector gradient(const Vector& theta_s) const
    {
        Vector g;
        evaluate(theta_s, &g, nullptr);
        return g;
    }

private:
    double evaluate(const Vector& theta_s, Vector* grad, Matrix* hess) const
    {
        detail::require(theta_s.size() == dim(), "NodeConditional: theta_s must have length p - 1");
        const Dataset& data = table_.data();
        const Index n = data.n();
        const Index p = data.p();
        Vector full = Vector::Zero(p);
        for (Index j = 0; j < dim(); ++j) full(others_[j]) = theta_s(j);

        double partition_sum = 0.0;
        Vector expect_sum = Vector::Zero(p);
        Matrix second_sum;
        if (hess) second_sum = Matrix::Zero(p, p);
        Vector e(offset_.size());
        Vector w(offset_.size());
        for (Index i = 0; i < n; ++i) {
            const auto block = table_.block(i);
            e.noalias() = block * full;
            e += offset_;
            const double m = e.maxCoeff();
            w = (e.array() - m).exp();
            const double z = w.sum();
            partition_sum += m + std::log(z);
            if (grad || hess) {
                w /= z;
                const Vector mean = block.transpose() * w;
                expect_sum += mean;
                if (hess) {
                    const Matrix weighted = block.array().colwise() * w.array().sqrt();
                    second_sum.noalias() += weighted.transpose() * weighted;
                    second_sum.noalias() -= mean * mean.transpose();
                }
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        if (grad) {
            grad->resize(dim());
            for (Index j = 0; j < dim(); ++j) (*grad)(j) = expect_sum(others_[j]) * inv_n - obs_phi_(j);
        }
        if (hess) {
            hess->resize(dim(), dim());
            for (Index a = 0; a < dim(); ++a)
                for (Index b = 0; b < dim(); ++b) (*hess)(a, b) = second_sum(others_[a], others_[b]) * inv_n;
        }
        return -obs_base_ - theta_s.dot(obs_phi_) + partition_sum * inv_n;
    }

    const ConditionalTable& table_;
    Index s_;
    std::vector<Index> others_;
    Vector obs_phi_;
    double obs_base_ = 0.0;
    Vector offset_;
};

/// Prop.-2 gradient of the node-conditional negative log-likelihood.
inline Vector conditional_gradient(const ModelSpec& model, const Vector& theta_s, Index s, const Dataset& data)
{
    detail::require_scalar(data, "conditional_gradient");
    const ConditionalTable table(model, data);
    return NodeConditional(table, s).gradient(theta_s);
}

inline double conditional_negloglik(const ModelSpec& model, const Vector& theta_s, Index s, const Dataset& data)
{
    detail::require_scalar(data, "conditional_negloglik");
    const ConditionalTable table(model, data);
    return NodeConditional(table, s).value(theta_s);
}

/// Neighbour weights of node s read off a full parameter matrix (t != s, ascending).
inline Vector node_weights(const ParamMatrix& theta, Index s)
{
    const auto others = other_nodes(s, theta.p());
    Vector w(static_cast<Index>(others.size()));
    for (std::size_t j = 0; j < others.size(); ++j) w(static_cast<Index>(j)) = theta.theta(s, others[j]);
    return w;
}

} // namespace semiefgm
