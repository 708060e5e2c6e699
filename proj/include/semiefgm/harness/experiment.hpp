#pragma once

#include "../baselines.hpp"
#include "../estimators.hpp"
#include "../evaluation.hpp"
#include "../gibbs.hpp"
#include "../parallel.hpp"
#include "config.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace semiefgm::harness {

/// Seed stream labels under the master seed: replicate r uses {r, kTrainStream}
/// and {r, kValidationStream}; the truth graph uses {kTruthStream}.
inline constexpr std::uint64_t kTrainStream = 0;
inline constexpr std::uint64_t kValidationStream = 1;
inline constexpr std::uint64_t kTruthStream = 0x7275746800000000ULL;
inline constexpr std::uint64_t kRateStream = 0x7261746500000000ULL;

/// Hyperparameters chosen on the validation sample plus the resulting fit.
struct TunedFit {
    ParamMatrix theta_hat;
    double lambda = 0.0;
    double m = 0.0;
    KernelSpec kernel;
    double score = std::numeric_limits<double>::infinity();
    bool converged = true;
    double kkt_residual = 0.0;
    int iterations = 0;
    /// Fits in the tuning grid that stopped before meeting grad_tol.
    int unconverged_in_grid = 0;
};

struct ReplicateRow {
    EstimatorKind estimator = EstimatorKind::semi_efgm_joint;
    int replicate = 0;
    SupportMetrics metrics;
    TunedFit fit;
};

struct SeedLineage {
    int replicate = 0;
    std::uint64_t train = 0;
    std::uint64_t validation = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    TruthModel truth;
    std::uint64_t truth_seed = 0;
    std::vector<SeedLineage> seeds;
    /// Rows ordered by estimator (config order), then replicate.
    std::vector<ReplicateRow> rows;
    std::map<EstimatorKind, std::vector<ParamMatrix>> estimates;
};

inline std::uint64_t truth_seed(const ExperimentConfig& cfg)
{
    return cfg.truth.seed ? *cfg.truth.seed : derive_seed(cfg.seed, {kTruthStream});
}

inline TruthModel build_truth(const ExperimentConfig& cfg)
{
    const auto& t = cfg.truth;
    if (t.kind == "model1") return make_model1(t.p, cfg.model);
    if (t.kind == "model2") return make_model2(t.p, t.edge_probability, truth_seed(cfg), cfg.model);
    if (t.kind == "chain") return make_chain(t.p, t.chain_weight, cfg.model);
    Matrix theta = read_matrix_csv(t.path);
    ParamMatrix pm{theta, DiagMode::free, Role::truth};
    try {
        pm.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(std::string("config field 'truth.path': ") + e.what());
    }
    return {std::move(pm), cfg.model, TruthKind::custom, 0.0};
}

inline SeedLineage replicate_seeds(const ExperimentConfig& cfg, int r)
{
    const auto rr = static_cast<std::uint64_t>(r);
    return {r, derive_seed(cfg.seed, {rr, kTrainStream}), derive_seed(cfg.seed, {rr, kValidationStream})};
}

inline Dataset generate_sample(const ExperimentConfig& cfg, const TruthModel& truth, std::uint64_t seed)
{
    GibbsConfig g = cfg.gibbs;
    g.seed = seed;
    return gibbs_generate(truth, cfg.n, g);
}

inline std::vector<double> lambda_values(const LambdaGrid& grid, double lambda_max)
{
    if (!grid.values.empty()) return grid.values;
    return log_grid(lambda_max > 0.0 ? lambda_max : 1.0, grid.ratio, grid.count);
}

/// Kernel candidates: sigma grid for heat, alpha x beta for polynomial.
inline std::vector<KernelSpec> kernel_candidates(const ExperimentConfig& cfg)
{
    const KernelSpec& base = cfg.model.kernel;
    std::vector<KernelSpec> out;
    switch (base.family) {
    case KernelFamily::heat:
        for (double s : cfg.tuning.sigma) out.push_back(KernelSpec::heat(s, base.feature_dim));
        break;
    case KernelFamily::polynomial:
        for (int a : cfg.tuning.alpha)
            for (double b : cfg.tuning.beta) out.push_back(KernelSpec::polynomial(b, a, base.feature_dim));
        break;
    case KernelFamily::linear: out.push_back(base); break;
    }
    return out;
}

namespace detail {

/// Lower score wins; ties keep the earlier candidate (larger lambda first).
inline void consider(TunedFit& best, TunedFit candidate)
{
    const int unconverged = best.unconverged_in_grid + (candidate.converged ? 0 : 1);
    if (candidate.score < best.score) best = std::move(candidate);
    best.unconverged_in_grid = unconverged;
}

inline GramAverage as_gram(const Matrix& m) { return {m, 0}; }

/// Stability score: negative kappa between train and validation edge sets.
inline double stability_score(const ParamMatrix& train_fit, const ParamMatrix& validation_fit)
{
    return -support_kappa(train_fit, validation_fit);
}

inline TunedFit tune_semi_joint(const ExperimentConfig& cfg, const Dataset& train, const Dataset& validation)
{
    const bool stability = cfg.tuning.criterion == TuningCriterion::stability;
    TunedFit best;
    for (const KernelSpec& kernel : kernel_candidates(cfg)) {
        const GramAverage phi_train = average_gram(kernel, train);
        const GramAverage phi_val = average_gram(kernel, validation);
        const auto lambdas = lambda_values(cfg.tuning.lambda, relaxed_lambda_max(phi_train));
        for (double m : cfg.tuning.m) {
            SolveConfig solve = cfg.solve;
            solve.m_dim = m;
            auto path = logdet_path(phi_train, lambdas, solve);
            std::vector<FitResult> path_val;
            if (stability) path_val = logdet_path(phi_val, lambdas, solve);
            for (std::size_t k = 0; k < path.size(); ++k) {
                FitResult& fit = path[k];
                TunedFit c;
                c.lambda = lambdas[k];
                c.m = m;
                c.kernel = kernel;
                if (stability) {
                    c.score = stability_score(fit.theta_hat, path_val[k].theta_hat);
                } else {
                    // The fit at (m, lambda) is m times the unit-m fit at lambda / m,
                    // so every candidate is scored at unit m.
                    ParamMatrix unit = fit.theta_hat;
                    unit.theta /= m;
                    c.score = relaxed_joint_score(unit, phi_val, 1.0);
                }
                c.converged = fit.converged && (!stability || path_val[k].converged);
                c.kkt_residual = fit.kkt_residual;
                c.iterations = fit.iterations;
                c.theta_hat = std::move(fit.theta_hat);
                consider(best, std::move(c));
            }
        }
    }
    return best;
}

inline TunedFit tune_semi_nodewise(const ExperimentConfig& cfg, const Dataset& train, const Dataset& validation)
{
    const bool stability = cfg.tuning.criterion == TuningCriterion::stability;
    TunedFit best;
    for (const KernelSpec& kernel : kernel_candidates(cfg)) {
        const GramAverage phi_train = average_gram(kernel, train);
        const GramAverage phi_val = average_gram(kernel, validation);
        const auto lambdas = lambda_values(cfg.tuning.lambda, relaxed_lambda_max(phi_train));
        auto path = nodewise_lasso_path(phi_train, lambdas, cfg.solve);
        std::vector<NodewiseFit> path_val;
        if (stability) path_val = nodewise_lasso_path(phi_val, lambdas, cfg.solve);
        for (std::size_t k = 0; k < path.size(); ++k) {
            TunedFit c;
            c.lambda = lambdas[k];
            c.m = 0.0;
            c.kernel = kernel;
            c.score = stability ? stability_score(path[k].theta_hat, path_val[k].theta_hat)
                                : relaxed_nodewise_score(path[k], phi_val);
            c.converged = path[k].converged() && (!stability || path_val[k].converged());
            c.kkt_residual = path[k].kkt_residual();
            for (const auto& node : path[k].nodes) c.iterations = std::max(c.iterations, node.stats.iterations);
            c.theta_hat = std::move(path[k].theta_hat);
            consider(best, std::move(c));
        }
    }
    return best;
}

/// Glasso on train/validation input matrices; the held-out score is the
/// Gaussian negative log-likelihood -logdet Theta + tr(Theta S_val).
inline TunedFit tune_glasso(const ExperimentConfig& cfg, const Matrix& s_train, const Matrix& s_val)
{
    const bool stability = cfg.tuning.criterion == TuningCriterion::stability;
    TunedFit best;
    double lambda_max = 0.0;
    for (Index a = 0; a < s_train.rows(); ++a)
        for (Index b = 0; b < s_train.cols(); ++b)
            if (a != b) lambda_max = std::max(lambda_max, std::abs(s_train(a, b)));
    const GramAverage val = as_gram(s_val);
    for (double lambda : lambda_values(cfg.tuning.lambda, lambda_max)) {
        GlassoStats stats, stats_val;
        TunedFit c;
        c.theta_hat = fit_glasso(s_train, lambda, {}, &stats);
        c.lambda = lambda;
        c.m = 2.0;
        c.kernel = KernelSpec::linear();
        c.converged = stats.converged;
        if (stability) {
            c.score = stability_score(c.theta_hat, fit_glasso(s_val, lambda, {}, &stats_val));
            c.converged = c.converged && stats_val.converged;
        } else {
            c.score = relaxed_joint_score(c.theta_hat, val, 2.0);
        }
        c.iterations = stats.sweeps;
        consider(best, std::move(c));
    }
    return best;
}

inline std::vector<NodeFit> oracle_path_step(const ConditionalTable& table, const SolveConfig& solve,
                                             const std::vector<NodeFit>& previous)
{
    std::vector<NodeFit> next;
    for (Index s = 0; s < table.data().p(); ++s)
        next.push_back(fit_nodewise_mle_exact(table, s, solve, previous.empty() ? nullptr : &previous[s].weights));
    return next;
}

/// Node-wise penalised MLE with the generating kernel. The held-out score is
/// the summed validation conditional negative log-likelihood. Scalar data only.
inline TunedFit tune_oracle_mle(const ExperimentConfig& cfg, const Dataset& train, const Dataset& validation)
{
    const bool stability = cfg.tuning.criterion == TuningCriterion::stability;
    const ModelSpec& model = cfg.model;
    const ConditionalTable table_train(model, train);
    const ConditionalTable table_val(model, validation);
    const Index p = train.p();
    double lambda_max = 0.0;
    for (Index s = 0; s < p; ++s)
        lambda_max = std::max(lambda_max,
                              NodeConditional(table_train, s).gradient(Vector::Zero(p - 1)).cwiseAbs().maxCoeff());
    const auto lambdas = lambda_values(cfg.tuning.lambda, lambda_max);
    std::vector<NodeFit> current, current_val;
    TunedFit best;
    for (double lambda : lambdas) {
        SolveConfig solve = cfg.solve;
        solve.lambda = lambda;
        std::vector<NodeFit> next = oracle_path_step(table_train, solve, current);
        TunedFit c;
        c.lambda = lambda;
        c.kernel = model.kernel;
        for (const auto& node : next) {
            c.converged = c.converged && node.stats.converged;
            c.kkt_residual = std::max(c.kkt_residual, node.stats.kkt_residual);
            c.iterations = std::max(c.iterations, node.stats.iterations);
        }
        c.theta_hat = symmetrize_min_magnitude(columns_from_nodes(next, p));
        if (stability) {
            std::vector<NodeFit> next_val = oracle_path_step(table_val, solve, current_val);
            for (const auto& node : next_val) c.converged = c.converged && node.stats.converged;
            c.score = stability_score(c.theta_hat, symmetrize_min_magnitude(columns_from_nodes(next_val, p)));
            current_val = std::move(next_val);
        } else {
            c.score = 0.0;
            for (const auto& node : next) c.score += NodeConditional(table_val, node.node).value(node.weights);
        }
        current = std::move(next);
        consider(best, std::move(c));
    }
    return best;
}

} // namespace detail

/// Tunes one estimator on the validation sample and returns its train-sample fit.
inline TunedFit fit_tuned(EstimatorKind kind, const ExperimentConfig& cfg, const Dataset& train,
                          const Dataset& validation)
{
    switch (kind) {
    case EstimatorKind::semi_efgm_joint: return detail::tune_semi_joint(cfg, train, validation);
    case EstimatorKind::semi_efgm_nodewise: return detail::tune_semi_nodewise(cfg, train, validation);
    case EstimatorKind::ggm:
        return detail::tune_glasso(cfg, sample_covariance(flatten_features(train)),
                                   sample_covariance(flatten_features(validation)));
    case EstimatorKind::nonparanormal:
        return detail::tune_glasso(cfg, skeptic_correlation(kendall_tau_matrix(flatten_features(train))).matrix,
                                   skeptic_correlation(kendall_tau_matrix(flatten_features(validation))).matrix);
    case EstimatorKind::oracle_mle:
        if (!train.is_scalar())
            throw UnsupportedOperation("oracle_mle: quadrature estimators need scalar variates");
        return detail::tune_oracle_mle(cfg, train, validation);
    }
    throw InvalidInput("unknown estimator");
}

/// Fits one estimator at a fixed lambda with the configured kernel and m,
/// without tuning.
inline TunedFit fit_fixed(EstimatorKind kind, const ExperimentConfig& cfg, const Dataset& data, double lambda)
{
    SolveConfig solve = cfg.solve;
    solve.lambda = lambda;
    solve.validate();
    TunedFit out;
    out.lambda = lambda;
    out.kernel = cfg.model.kernel;
    out.score = 0.0;
    switch (kind) {
    case EstimatorKind::semi_efgm_joint: {
        FitResult fit = fit_joint_logdet(average_gram(cfg.model.kernel, data), solve);
        out.m = solve.m_dim;
        out.converged = fit.converged;
        out.kkt_residual = fit.kkt_residual;
        out.iterations = fit.iterations;
        out.theta_hat = std::move(fit.theta_hat);
        return out;
    }
    case EstimatorKind::semi_efgm_nodewise: {
        NodewiseFit fit = fit_nodewise_lasso_all(average_gram(cfg.model.kernel, data), solve);
        out.converged = fit.converged();
        out.kkt_residual = fit.kkt_residual();
        for (const auto& node : fit.nodes) out.iterations = std::max(out.iterations, node.stats.iterations);
        out.theta_hat = std::move(fit.theta_hat);
        return out;
    }
    case EstimatorKind::ggm:
    case EstimatorKind::nonparanormal: {
        GlassoStats stats;
        out.theta_hat = kind == EstimatorKind::ggm ? fit_ggm(data, lambda, {}, &stats)
                                                   : fit_nonparanormal(data, lambda, {}, &stats);
        out.kernel = KernelSpec::linear();
        out.m = 2.0;
        out.converged = stats.converged;
        out.iterations = stats.sweeps;
        return out;
    }
    case EstimatorKind::oracle_mle: {
        if (!data.is_scalar()) throw UnsupportedOperation("oracle_mle: quadrature estimators need scalar variates");
        const ConditionalTable table(cfg.model, data);
        const std::vector<NodeFit> nodes = detail::oracle_path_step(table, solve, {});
        for (const auto& node : nodes) {
            out.converged = out.converged && node.stats.converged;
            out.kkt_residual = std::max(out.kkt_residual, node.stats.kkt_residual);
            out.iterations = std::max(out.iterations, node.stats.iterations);
        }
        out.theta_hat = symmetrize_min_magnitude(columns_from_nodes(nodes, data.p()));
        return out;
    }
    }
    throw InvalidInput("unknown estimator");
}

/// Generates train/validation pairs per replicate, tunes and fits every
/// configured estimator, and scores supports against the truth. Output is
/// independent of the thread count.
inline ExperimentReport run_replicated_experiment(const ExperimentConfig& cfg)
{
    ExperimentReport report;
    report.config = cfg;
    report.truth = build_truth(cfg);
    report.truth_seed = cfg.truth.kind == "model2" ? truth_seed(cfg) : 0;
    const int reps = cfg.replications;
    const std::size_t kinds = cfg.estimators.size();
    for (int r = 0; r < reps; ++r) report.seeds.push_back(replicate_seeds(cfg, r));

    std::vector<std::vector<ReplicateRow>> per_rep(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), cfg.threads, [&](std::size_t r) {
        const SeedLineage& seeds = report.seeds[r];
        const Dataset train = generate_sample(cfg, report.truth, seeds.train);
        const Dataset validation = generate_sample(cfg, report.truth, seeds.validation);
        for (std::size_t e = 0; e < kinds; ++e) {
            ReplicateRow row;
            row.estimator = cfg.estimators[e];
            row.replicate = static_cast<int>(r);
            row.fit = fit_tuned(row.estimator, cfg, train, validation);
            row.metrics = support_metrics(row.fit.theta_hat, report.truth.theta_star);
            per_rep[r].push_back(std::move(row));
        }
    });
    for (std::size_t e = 0; e < kinds; ++e)
        for (int r = 0; r < reps; ++r) {
            ReplicateRow& row = per_rep[static_cast<std::size_t>(r)][e];
            report.estimates[row.estimator].push_back(row.fit.theta_hat);
            report.rows.push_back(std::move(row));
        }
    return report;
}

inline std::uint64_t ratecheck_seed(const ExperimentConfig& cfg) { return derive_seed(cfg.seed, {kRateStream}); }

/// Runs the configured rate check against the configured truth.
inline RateCheckResult run_ratecheck(const ExperimentConfig& cfg)
{
    const TruthModel truth = build_truth(cfg);
    RateCheckOptions opts;
    opts.gibbs = cfg.gibbs;
    opts.threads = cfg.threads;
    const auto& rc = cfg.ratecheck;
    if (rc.statistic == "gradient")
        return gradient_concentration_check(truth, rc.n_grid, rc.replications, ratecheck_seed(cfg), opts);
    const RateEstimator est = rc.estimator == "joint_mle" ? RateEstimator::joint_mle : RateEstimator::nodewise_mle;
    return error_scaling_check(truth, est, rc.n_grid, rc.replications, rc.lambda_constant, ratecheck_seed(cfg), opts,
                               cfg.solve);
}

struct SummaryRow {
    EstimatorKind estimator = EstimatorKind::semi_efgm_joint;
    int replications = 0;
    double mean_f = 0.0, se_f = 0.0;
    double mean_precision = 0.0, mean_recall = 0.0;
};

/// Mean and standard error (sd / sqrt(R)) per estimator, in config order.
inline std::vector<SummaryRow> summarize(const ExperimentReport& report)
{
    std::vector<SummaryRow> out;
    for (EstimatorKind kind : report.config.estimators) {
        SummaryRow s;
        s.estimator = kind;
        std::vector<double> f;
        for (const auto& row : report.rows)
            if (row.estimator == kind) {
                f.push_back(row.metrics.fscore);
                s.mean_precision += row.metrics.precision;
                s.mean_recall += row.metrics.recall;
            }
        s.replications = static_cast<int>(f.size());
        if (f.empty()) continue;
        const double r = static_cast<double>(f.size());
        for (double v : f) s.mean_f += v;
        s.mean_f /= r;
        s.mean_precision /= r;
        s.mean_recall /= r;
        double ss = 0.0;
        for (double v : f) ss += (v - s.mean_f) * (v - s.mean_f);
        s.se_f = f.size() > 1 ? std::sqrt(ss / (r - 1.0)) / std::sqrt(r) : 0.0;
        out.push_back(s);
    }
    return out;
}

} // namespace semiefgm::harness
