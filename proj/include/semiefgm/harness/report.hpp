#pragma once

#include "experiment.hpp"
#include "io.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#ifndef SEMIEFGM_VERSION
#define SEMIEFGM_VERSION "0.1.0"
#endif

namespace semiefgm::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnconverged = 3;
inline constexpr int kExitNoop = 4;

inline std::string kernel_label(const KernelSpec& k)
{
    switch (k.family) {
    case KernelFamily::heat: return "heat(sigma=" + format_double(k.sigma) + ")";
    case KernelFamily::polynomial:
        return "polynomial(alpha=" + std::to_string(k.alpha) + ";beta=" + format_double(k.beta) + ")";
    case KernelFamily::linear: return "linear";
    }
    return "?";
}

inline const char* kMetricsHeader =
    "estimator,replicate,precision,recall,fscore,tp,fp,fn,lambda,m,kernel,converged,kkt_residual,iterations,"
    "unconverged_in_grid";

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<ReplicateRow>& rows)
{
    auto out = open_output(path);
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        out << to_string(r.estimator) << ',' << r.replicate << ',' << format_double(m.precision) << ','
            << format_double(m.recall) << ',' << format_double(m.fscore) << ',' << m.tp << ',' << m.fp << ','
            << m.fn << ',' << format_double(r.fit.lambda) << ',' << format_double(r.fit.m) << ','
            << kernel_label(r.fit.kernel) << ',' << (r.fit.converged ? 1 : 0) << ','
            << format_double(r.fit.kkt_residual) << ',' << r.fit.iterations << ',' << r.fit.unconverged_in_grid
            << '\n';
    }
}

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows)
{
    auto out = open_output(path);
    out << "estimator,replications,mean_f,se_f,mean_precision,mean_recall\n";
    for (const auto& s : rows)
        out << to_string(s.estimator) << ',' << s.replications << ',' << format_double(s.mean_f) << ','
            << format_double(s.se_f) << ',' << format_double(s.mean_precision) << ','
            << format_double(s.mean_recall) << '\n';
}

/// Matrix CSV with header "node,0,1,...", counts in [0, R].
inline void write_frequency_csv(const std::filesystem::path& path, const FrequencyMap& map)
{
    auto out = open_output(path);
    out << "node";
    for (Index t = 0; t < map.cols(); ++t) out << ',' << t;
    out << '\n';
    for (Index s = 0; s < map.rows(); ++s) {
        out << s;
        for (Index t = 0; t < map.cols(); ++t) out << ',' << map(s, t);
        out << '\n';
    }
}

/// Long format: one row per (n, replicate), then one summary row per n with
/// replicate = "median". Slope and interval go to the manifest.
inline void write_ratecheck_csv(const std::filesystem::path& path, const RateCheckResult& result)
{
    auto out = open_output(path);
    out << "n,replicate,statistic\n";
    for (std::size_t k = 0; k < result.sample_sizes.size(); ++k) {
        for (std::size_t r = 0; r < result.statistics[k].size(); ++r)
            out << result.sample_sizes[k] << ',' << r << ',' << format_double(result.statistics[k][r]) << '\n';
        out << result.sample_sizes[k] << ",median," << format_double(result.statistic_medians[k]) << '\n';
    }
}

inline json base_manifest(const ExperimentConfig& cfg, const std::string& command)
{
    json m;
    m["software"] = "semiefgm";
    m["version"] = SEMIEFGM_VERSION;
    m["command"] = command;
    m["config_hash"] = config_hash(cfg);
    m["config"] = cfg.source;
    m["master_seed"] = cfg.seed;
    return m;
}

inline bool lineage_disjoint(const std::vector<SeedLineage>& seeds)
{
    std::set<std::uint64_t> train, validation;
    for (const auto& s : seeds) {
        train.insert(s.train);
        validation.insert(s.validation);
    }
    for (std::uint64_t v : validation)
        if (train.count(v)) return false;
    return train.size() == seeds.size() && validation.size() == seeds.size();
}

/// Writes metrics.csv, summary.csv, one frequency map per estimator and
/// manifest.json under dir. Returns kExitOk iff every reported fit converged,
/// kExitNoop when there are no rows (manifest only).
inline int emit_report(const ExperimentReport& report, const std::filesystem::path& dir)
{
    json manifest = base_manifest(report.config, "replicate");
    manifest["truth_seed"] = report.truth_seed;
    json lineage = json::array();
    for (const auto& s : report.seeds)
        lineage.push_back({{"replicate", s.replicate}, {"train_seed", s.train}, {"validation_seed", s.validation}});
    manifest["seed_lineage"] = lineage;
    manifest["train_validation_disjoint"] = lineage_disjoint(report.seeds);

    if (report.rows.empty()) {
        manifest["outputs"] = json::array();
        manifest["status"] = "noop";
        write_json(dir / "manifest.json", manifest);
        return kExitNoop;
    }

    json outputs = json::array({"metrics.csv", "summary.csv"});
    write_metrics_csv(dir / "metrics.csv", report.rows);
    write_summary_csv(dir / "summary.csv", summarize(report));
    for (EstimatorKind kind : report.config.estimators) {
        const auto it = report.estimates.find(kind);
        if (it == report.estimates.end() || it->second.empty()) continue;
        const std::string name = "frequency_map_" + to_string(kind) + ".csv";
        write_frequency_csv(dir / name, frequency_map(it->second));
        outputs.push_back(name);
    }
    bool converged = true;
    for (const auto& r : report.rows) converged = converged && r.fit.converged;
    manifest["outputs"] = outputs;
    manifest["all_converged"] = converged;
    manifest["status"] = converged ? "ok" : "unconverged";
    write_json(dir / "manifest.json", manifest);
    return converged ? kExitOk : kExitUnconverged;
}

inline int emit_ratecheck(const ExperimentConfig& cfg, std::uint64_t seed, const RateCheckResult& result,
                          const std::filesystem::path& dir)
{
    json manifest = base_manifest(cfg, "ratecheck");
    manifest["ratecheck_seed"] = seed;
    manifest["fitted_slope"] = result.fitted_slope;
    manifest["slope_ci"] = {result.slope_ci[0], result.slope_ci[1]};
    manifest["medians_decreasing"] = result.medians_decreasing();
    manifest["all_converged"] = result.all_converged;
    if (result.sample_sizes.empty()) {
        manifest["outputs"] = json::array();
        manifest["status"] = "noop";
        write_json(dir / "manifest.json", manifest);
        return kExitNoop;
    }
    write_ratecheck_csv(dir / "ratecheck.csv", result);
    manifest["outputs"] = json::array({"ratecheck.csv"});
    manifest["status"] = result.all_converged ? "ok" : "unconverged";
    write_json(dir / "manifest.json", manifest);
    return result.all_converged ? kExitOk : kExitUnconverged;
}

} // namespace semiefgm::harness
