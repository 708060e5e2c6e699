#pragma once

#include "../density.hpp"
#include "../errors.hpp"
#include "../gibbs.hpp"
#include "../kernel.hpp"
#include "../solver.hpp"
#include "io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace semiefgm::harness {

enum class EstimatorKind { semi_efgm_joint, semi_efgm_nodewise, ggm, nonparanormal, oracle_mle };

inline std::string to_string(EstimatorKind k)
{
    switch (k) {
    case EstimatorKind::semi_efgm_joint: return "semi_efgm_joint";
    case EstimatorKind::semi_efgm_nodewise: return "semi_efgm_nodewise";
    case EstimatorKind::ggm: return "ggm";
    case EstimatorKind::nonparanormal: return "nonparanormal";
    case EstimatorKind::oracle_mle: return "oracle_mle";
    }
    return "unknown";
}

inline EstimatorKind estimator_from_string(const std::string& name)
{
    for (auto k : {EstimatorKind::semi_efgm_joint, EstimatorKind::semi_efgm_nodewise, EstimatorKind::ggm,
                   EstimatorKind::nonparanormal, EstimatorKind::oracle_mle})
        if (to_string(k) == name) return k;
    throw InvalidInput("config field 'estimators': unknown estimator '" + name + "'");
}

struct TruthSpec {
    std::string kind = "model1";  // model1 | model2 | chain | file
    Index p = 50;
    double edge_probability = 0.02;
    double chain_weight = 1.0;
    std::optional<std::uint64_t> seed;
    std::string path;
};

struct LambdaGrid {
    int count = 20;
    /// Smallest grid value as a fraction of the largest.
    double ratio = 0.01;
    /// Explicit descending values; overrides count/ratio when nonempty.
    std::vector<double> values;
};

enum class TuningCriterion { stability, heldout };

struct TuningGrids {
    /// stability: maximise Cohen's kappa between the train-sample and
    /// validation-sample edge sets. heldout: minimise the held-out negative
    /// log-likelihood of the train fit.
    TuningCriterion criterion = TuningCriterion::stability;
    std::vector<double> sigma{0.5, 1.0, 2.0};
    std::vector<int> alpha{2, 3};
    std::vector<double> beta{0.5, 1.0};
    std::vector<double> m{1.0, 2.0, 5.0, 10.0};
    LambdaGrid lambda;
};

struct RateCheckSpec {
    std::string statistic = "gradient";  // gradient | error
    std::string estimator = "nodewise_mle";  // nodewise_mle | joint_mle
    std::vector<Index> n_grid{125, 250, 500, 1000, 2000};
    int replications = 50;
    double lambda_constant = 0.5;
};

struct ExperimentConfig {
    TruthSpec truth;
    ModelSpec model;
    GibbsConfig gibbs;
    std::vector<EstimatorKind> estimators{EstimatorKind::semi_efgm_joint};
    Index n = 200;
    int replications = 10;
    TuningGrids tuning;
    SolveConfig solve;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    int threads = 1;
    RateCheckSpec ratecheck;
    /// Source document, kept for hashing and the manifest.
    json source;
};

namespace detail {

template <class T>
T get_field(const json& j, const char* key, const std::string& path, T fallback)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidInput("config field '" + path + key + "': wrong type");
    }
}

inline void field_check(bool ok, const std::string& field, const std::string& why)
{
    if (!ok) throw InvalidInput("config field '" + field + "': " + why);
}

inline KernelSpec parse_kernel(const json& j)
{
    KernelSpec k;
    k.family = kernel_family_from_string(get_field<std::string>(j, "family", "model.kernel.", "heat"));
    k.sigma = get_field(j, "sigma", "model.kernel.", 1.0);
    k.beta = get_field(j, "beta", "model.kernel.", 1.0);
    k.alpha = get_field(j, "alpha", "model.kernel.", 2);
    k.feature_dim = get_field(j, "feature_dim", "model.kernel.", 1);
    try {
        k.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(std::string("config field 'model.kernel': ") + e.what());
    }
    return k;
}

inline json kernel_json(const KernelSpec& k)
{
    return {{"family", to_string(k.family)},
            {"sigma", k.sigma},
            {"beta", k.beta},
            {"alpha", k.alpha},
            {"feature_dim", k.feature_dim}};
}

} // namespace detail

/// Parses and validates an experiment document. Every error names its field.
inline ExperimentConfig parse_config(const json& j)
{
    using detail::field_check;
    using detail::get_field;
    field_check(j.is_object(), "<root>", "must be an object");
    ExperimentConfig cfg;
    cfg.source = j;

    field_check(j.contains("seed"), "seed", "is mandatory");
    cfg.seed = get_field<std::uint64_t>(j, "seed", "", 0);

    if (j.contains("truth")) {
        const json& t = j.at("truth");
        cfg.truth.kind = get_field<std::string>(t, "kind", "truth.", "model1");
        cfg.truth.p = get_field<Index>(t, "p", "truth.", 50);
        cfg.truth.edge_probability = get_field(t, "edge_probability", "truth.", 0.02);
        cfg.truth.chain_weight = get_field(t, "chain_weight", "truth.", 1.0);
        if (t.contains("seed")) cfg.truth.seed = get_field<std::uint64_t>(t, "seed", "truth.", 0);
        cfg.truth.path = get_field<std::string>(t, "path", "truth.", "");
    }
    const auto& kind = cfg.truth.kind;
    field_check(kind == "model1" || kind == "model2" || kind == "chain" || kind == "file", "truth.kind",
                "must be model1, model2, chain or file");
    if (kind == "model1") field_check(cfg.truth.p >= 10, "truth.p", "model1 needs p >= 10");
    if (kind != "file") field_check(cfg.truth.p >= 2, "truth.p", "must be at least 2");
    if (kind == "model2")
        field_check(cfg.truth.edge_probability > 0.0 && cfg.truth.edge_probability < 1.0, "truth.edge_probability",
                    "must lie in (0, 1)");
    if (kind == "file") field_check(!cfg.truth.path.empty(), "truth.path", "required when truth.kind is file");

    if (j.contains("model")) {
        const json& m = j.at("model");
        if (m.contains("kernel")) cfg.model.kernel = detail::parse_kernel(m.at("kernel"));
        cfg.model.lift = feature_lift_from_string(
            get_field<std::string>(m, "lift", "model.", cfg.model.kernel.feature_dim > 1 ? "unit_monomial" : "identity"));
        cfg.model.base_coeff = get_field(m, "base_coeff", "model.", 0.5);
        if (m.contains("domain")) {
            const auto dom = get_field<std::vector<double>>(m, "domain", "model.", {});
            field_check(dom.size() == 2, "model.domain", "must be [lo, hi]");
            cfg.model.domain_lo = dom[0];
            cfg.model.domain_hi = dom[1];
        }
        cfg.model.grid_points = get_field(m, "grid_points", "model.", 401);
    }
    try {
        cfg.model.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(std::string("config field 'model': ") + e.what());
    }

    cfg.gibbs.domain_lo = cfg.model.domain_lo;
    cfg.gibbs.domain_hi = cfg.model.domain_hi;
    cfg.gibbs.grid_points = cfg.model.grid_points;
    if (j.contains("gibbs")) {
        const json& g = j.at("gibbs");
        cfg.gibbs.burn_in = get_field(g, "burn_in", "gibbs.", 500);
        cfg.gibbs.thin = get_field(g, "thin", "gibbs.", 10);
        cfg.gibbs.grid_points = get_field(g, "grid_points", "gibbs.", cfg.gibbs.grid_points);
        cfg.gibbs.random_scan = get_field(g, "random_scan", "gibbs.", false);
    }
    field_check(cfg.gibbs.burn_in >= 0, "gibbs.burn_in", "must be nonnegative");
    field_check(cfg.gibbs.thin >= 1, "gibbs.thin", "must be at least 1");
    field_check(cfg.gibbs.grid_points >= 201, "gibbs.grid_points", "must be at least 201");

    if (j.contains("estimators")) {
        cfg.estimators.clear();
        for (const auto& e : j.at("estimators")) {
            field_check(e.is_string(), "estimators", "entries must be strings");
            cfg.estimators.push_back(estimator_from_string(e.get<std::string>()));
        }
    }
    field_check(!cfg.estimators.empty(), "estimators", "must be nonempty");

    cfg.n = get_field<Index>(j, "n", "", 200);
    field_check(cfg.n >= 2, "n", "must be at least 2");
    cfg.replications = get_field(j, "replications", "", 10);
    field_check(cfg.replications >= 1, "replications", "must be at least 1");

    if (j.contains("tuning")) {
        const json& t = j.at("tuning");
        cfg.tuning.sigma = get_field(t, "sigma", "tuning.", cfg.tuning.sigma);
        cfg.tuning.alpha = get_field(t, "alpha", "tuning.", cfg.tuning.alpha);
        cfg.tuning.beta = get_field(t, "beta", "tuning.", cfg.tuning.beta);
        cfg.tuning.m = get_field(t, "m", "tuning.", cfg.tuning.m);
        const auto criterion = get_field<std::string>(t, "criterion", "tuning.", "stability");
        field_check(criterion == "stability" || criterion == "heldout", "tuning.criterion",
                    "must be stability or heldout");
        cfg.tuning.criterion = criterion == "stability" ? TuningCriterion::stability : TuningCriterion::heldout;
        if (t.contains("lambda")) {
            const json& l = t.at("lambda");
            cfg.tuning.lambda.count = get_field(l, "count", "tuning.lambda.", 20);
            cfg.tuning.lambda.ratio = get_field(l, "ratio", "tuning.lambda.", 0.01);
            cfg.tuning.lambda.values = get_field(l, "values", "tuning.lambda.", std::vector<double>{});
        }
    }
    field_check(!cfg.tuning.sigma.empty(), "tuning.sigma", "must be nonempty");
    field_check(!cfg.tuning.alpha.empty(), "tuning.alpha", "must be nonempty");
    field_check(!cfg.tuning.beta.empty(), "tuning.beta", "must be nonempty");
    field_check(!cfg.tuning.m.empty(), "tuning.m", "must be nonempty");
    for (double v : cfg.tuning.sigma) field_check(v > 0.0, "tuning.sigma", "entries must be positive");
    for (int v : cfg.tuning.alpha) field_check(v >= 1, "tuning.alpha", "entries must be >= 1");
    for (double v : cfg.tuning.beta) field_check(v >= 0.0, "tuning.beta", "entries must be nonnegative");
    for (double v : cfg.tuning.m) field_check(v > 0.0, "tuning.m", "entries must be positive");
    field_check(cfg.tuning.lambda.count >= 1, "tuning.lambda.count", "must be at least 1");
    field_check(cfg.tuning.lambda.ratio > 0.0 && cfg.tuning.lambda.ratio < 1.0, "tuning.lambda.ratio",
                "must lie in (0, 1)");
    for (std::size_t k = 0; k < cfg.tuning.lambda.values.size(); ++k) {
        field_check(cfg.tuning.lambda.values[k] >= 0.0, "tuning.lambda.values", "entries must be nonnegative");
        if (k > 0)
            field_check(cfg.tuning.lambda.values[k] < cfg.tuning.lambda.values[k - 1], "tuning.lambda.values",
                        "must be strictly descending");
    }

    if (j.contains("solve")) {
        const json& s = j.at("solve");
        cfg.solve.max_iters = get_field(s, "max_iters", "solve.", cfg.solve.max_iters);
        cfg.solve.grad_tol = get_field(s, "grad_tol", "solve.", cfg.solve.grad_tol);
        cfg.solve.pd_floor = get_field(s, "pd_floor", "solve.", cfg.solve.pd_floor);
        cfg.solve.backtrack_factor = get_field(s, "backtrack_factor", "solve.", cfg.solve.backtrack_factor);
        cfg.solve.lambda = get_field(s, "lambda", "solve.", cfg.solve.lambda);
        cfg.solve.m_dim = get_field(s, "m", "solve.", cfg.solve.m_dim);
    }
    try {
        cfg.solve.validate();
    } catch (const InvalidInput& e) {
        throw InvalidInput(std::string("config field 'solve': ") + e.what());
    }

    cfg.output_dir = get_field<std::string>(j, "output_dir", "", "out");
    cfg.threads = get_field(j, "threads", "", 1);
    field_check(cfg.threads >= 1, "threads", "must be at least 1");

    if (j.contains("ratecheck")) {
        const json& r = j.at("ratecheck");
        cfg.ratecheck.statistic = get_field<std::string>(r, "statistic", "ratecheck.", "gradient");
        cfg.ratecheck.estimator = get_field<std::string>(r, "estimator", "ratecheck.", "nodewise_mle");
        cfg.ratecheck.n_grid = get_field(r, "n_grid", "ratecheck.", cfg.ratecheck.n_grid);
        cfg.ratecheck.replications = get_field(r, "replications", "ratecheck.", 50);
        cfg.ratecheck.lambda_constant = get_field(r, "lambda_constant", "ratecheck.", 0.5);
    }
    field_check(cfg.ratecheck.statistic == "gradient" || cfg.ratecheck.statistic == "error", "ratecheck.statistic",
                "must be gradient or error");
    field_check(cfg.ratecheck.estimator == "nodewise_mle" || cfg.ratecheck.estimator == "joint_mle",
                "ratecheck.estimator", "must be nodewise_mle or joint_mle");
    field_check(cfg.ratecheck.n_grid.size() >= 2, "ratecheck.n_grid", "needs two or more sample sizes");
    for (std::size_t k = 1; k < cfg.ratecheck.n_grid.size(); ++k)
        field_check(cfg.ratecheck.n_grid[k] > cfg.ratecheck.n_grid[k - 1], "ratecheck.n_grid",
                    "must be strictly increasing");
    field_check(cfg.ratecheck.replications >= 1, "ratecheck.replications", "must be at least 1");
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_json(path)); }

/// Hash of the canonical (key-sorted) config document.
inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a(cfg.source.dump())); }

} // namespace semiefgm::harness
