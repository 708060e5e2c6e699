#include <semiefgm/harness/config.hpp>
#include <semiefgm/harness/experiment.hpp>
#include <semiefgm/harness/ingest.hpp>
#include <semiefgm/harness/io.hpp>
#include <semiefgm/harness/report.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

using namespace semiefgm;
using namespace semiefgm::harness;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_config)
{
    auto* opt = cmd->add_option("--config", f.config, "experiment config (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seed, "master seed (overrides the config)");
    cmd->add_option("--out", f.out, "output directory (overrides config and SEMIEFGM_OUTPUT_DIR)");
    cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

/// Applies flag overrides to the config document before parsing, so the
/// manifest hash covers them.
ExperimentConfig resolve(const CommonFlags& f)
{
    json doc = f.config.empty() ? json::object() : read_json(f.config);
    if (f.seed) doc["seed"] = *f.seed;
    if (f.threads) doc["threads"] = *f.threads;
    ExperimentConfig cfg = parse_config(doc);
    if (!f.out.empty())
        cfg.output_dir = f.out;
    else if (const char* env = std::getenv("SEMIEFGM_OUTPUT_DIR"); env && *env)
        cfg.output_dir = env;
    return cfg;
}

int cmd_simulate(const CommonFlags& f)
{
    const ExperimentConfig cfg = resolve(f);
    const fs::path dir = cfg.output_dir;
    const TruthModel truth = build_truth(cfg);
    write_matrix_csv(dir / "truth.csv", truth.theta_star.theta);
    json manifest = base_manifest(cfg, "simulate");
    json lineage = json::array();
    json outputs = json::array({"truth.csv"});
    std::vector<SeedLineage> seeds;
    for (int r = 0; r < cfg.replications; ++r) {
        const SeedLineage s = replicate_seeds(cfg, r);
        seeds.push_back(s);
        const std::string train = "train_" + std::to_string(r) + ".csv";
        const std::string val = "validation_" + std::to_string(r) + ".csv";
        write_dataset_csv(dir / train, generate_sample(cfg, truth, s.train));
        write_dataset_csv(dir / val, generate_sample(cfg, truth, s.validation));
        outputs.push_back(train);
        outputs.push_back(val);
        lineage.push_back({{"replicate", r}, {"train_seed", s.train}, {"validation_seed", s.validation}});
    }
    manifest["truth_seed"] = cfg.truth.kind == "model2" ? truth_seed(cfg) : 0;
    manifest["seed_lineage"] = lineage;
    manifest["train_validation_disjoint"] = lineage_disjoint(seeds);
    manifest["outputs"] = outputs;
    manifest["status"] = "ok";
    write_json(dir / "manifest.json", manifest);
    return kExitOk;
}

struct FitFlags {
    std::string data;
    std::string validation;
    std::string estimator = "semi_efgm_joint";
    std::optional<double> lambda;
};

int cmd_fit(const CommonFlags& f, const FitFlags& ff)
{
    const ExperimentConfig cfg = resolve(f);
    const fs::path dir = cfg.output_dir;
    const EstimatorKind kind = estimator_from_string(ff.estimator);
    const Dataset train = read_dataset_csv(ff.data);
    TunedFit fit;
    if (!ff.validation.empty()) {
        fit = fit_tuned(kind, cfg, train, read_dataset_csv(ff.validation));
    } else {
        if (!ff.lambda) throw InvalidInput("fit: pass --lambda or --validation");
        fit = fit_fixed(kind, cfg, train, *ff.lambda);
    }
    write_matrix_csv(dir / "estimate.csv", fit.theta_hat.theta);
    json manifest = base_manifest(cfg, "fit");
    manifest["estimator"] = to_string(kind);
    manifest["lambda"] = fit.lambda;
    manifest["m"] = fit.m;
    manifest["kernel"] = kernel_label(fit.kernel);
    manifest["converged"] = fit.converged;
    manifest["kkt_residual"] = fit.kkt_residual;
    manifest["iterations"] = fit.iterations;
    manifest["tuned"] = !ff.validation.empty();
    manifest["outputs"] = json::array({"estimate.csv"});
    manifest["status"] = fit.converged ? "ok" : "unconverged";
    write_json(dir / "manifest.json", manifest);
    return fit.converged ? kExitOk : kExitUnconverged;
}

struct EvaluateFlags {
    std::string estimate;
    std::string truth;
    std::string labels;
    std::optional<Index> topk;
    double threshold = kSupportThreshold;
};

int cmd_evaluate(const EvaluateFlags& ef, const std::string& out)
{
    const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
    const ParamMatrix estimate{read_matrix_csv(ef.estimate), DiagMode::free, Role::estimate};
    SupportMetrics m;
    std::string mode;
    if (!ef.truth.empty()) {
        const ParamMatrix truth{read_matrix_csv(ef.truth), DiagMode::free, Role::truth};
        m = support_metrics(estimate, truth, ef.threshold);
        mode = "support";
    } else {
        if (ef.labels.empty() || !ef.topk) throw InvalidInput("evaluate: pass --truth, or --labels with --topk");
        std::vector<int> labels;
        const auto rows = read_csv(ef.labels);
        for (std::size_t r = 1; r < rows.size(); ++r) {
            if (rows[r].size() < 2) throw InvalidInput(ef.labels + ": expected node,label rows");
            labels.push_back(static_cast<int>(parse_double(rows[r][1], ef.labels)));
        }
        m = topk_link_metrics(estimate, labels, *ef.topk);
        mode = "topk";
    }
    auto file = open_output(dir / "evaluation.csv");
    file << "mode,precision,recall,fscore,tp,fp,fn,threshold\n"
         << mode << ',' << format_double(m.precision) << ',' << format_double(m.recall) << ','
         << format_double(m.fscore) << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << format_double(m.threshold)
         << '\n';
    json manifest;
    manifest["software"] = "semiefgm";
    manifest["version"] = SEMIEFGM_VERSION;
    manifest["command"] = "evaluate";
    manifest["estimate"] = ef.estimate;
    manifest["reference"] = mode == "support" ? ef.truth : ef.labels;
    manifest["outputs"] = json::array({"evaluation.csv"});
    manifest["status"] = "ok";
    write_json(dir / "manifest.json", manifest);
    std::cout << mode << " precision=" << m.precision << " recall=" << m.recall << " F=" << m.fscore << '\n';
    return kExitOk;
}

int cmd_replicate(const CommonFlags& f)
{
    const ExperimentConfig cfg = resolve(f);
    const ExperimentReport report = run_replicated_experiment(cfg);
    const int code = emit_report(report, cfg.output_dir);
    for (const auto& s : summarize(report))
        std::cout << to_string(s.estimator) << ": mean F " << s.mean_f << " (SE " << s.se_f << ") over "
                  << s.replications << " replicates\n";
    return code;
}

int cmd_ratecheck(const CommonFlags& f)
{
    const ExperimentConfig cfg = resolve(f);
    const RateCheckResult result = run_ratecheck(cfg);
    std::cout << "fitted slope " << result.fitted_slope << " [" << result.slope_ci[0] << ", " << result.slope_ci[1]
              << "]\n";
    return emit_ratecheck(cfg, ratecheck_seed(cfg), result, cfg.output_dir);
}

struct IngestFlags {
    std::string input;
    int window = 5;
    std::string mode = "returns";
};

int cmd_ingest(const IngestFlags& in, const std::string& out)
{
    const fs::path dir = out.empty() ? fs::path("out") : fs::path(out);
    PriceIngestSpec spec{in.input, in.window, window_mode_from_string(in.mode)};
    const IngestResult result = ingest_prices(spec);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    write_dataset_csv(dir / "dataset.csv", result.data);
    {
        auto file = open_output(dir / "tickers.csv");
        file << "node,ticker\n";
        for (std::size_t s = 0; s < result.tickers.size(); ++s) file << s << ',' << result.tickers[s] << '\n';
    }
    json manifest;
    manifest["software"] = "semiefgm";
    manifest["version"] = SEMIEFGM_VERSION;
    manifest["command"] = "ingest";
    manifest["input"] = in.input;
    manifest["window"] = in.window;
    manifest["window_mode"] = in.mode;
    manifest["samples"] = result.data.n();
    manifest["tickers"] = result.data.p();
    manifest["rows_used"] = result.rows_used;
    json dropped = json::array();
    for (const auto& d : result.dropped_tickers) dropped.push_back({{"ticker", d.ticker}, {"reason", d.reason}});
    manifest["dropped_tickers"] = dropped;
    manifest["dropped_rows"] = result.dropped_rows;
    manifest["outputs"] = json::array({"dataset.csv", "tickers.csv"});
    manifest["status"] = "ok";
    write_json(dir / "manifest.json", manifest);
    std::cout << result.data.n() << " samples x " << result.data.p() << " tickers\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Semiparametric exponential family graphical models"};
    app.set_version_flag("--version", std::string(SEMIEFGM_VERSION));
    app.require_subcommand(1);

    CommonFlags sim_flags, fit_common, rep_flags, rate_flags;
    auto* simulate = app.add_subcommand("simulate", "draw the truth graph and train/validation samples");
    add_common(simulate, sim_flags, true);

    FitFlags fit_flags;
    auto* fit = app.add_subcommand("fit", "fit one estimator to a dataset CSV");
    add_common(fit, fit_common, true);
    fit->add_option("--data", fit_flags.data, "training dataset CSV")->required()->check(CLI::ExistingFile);
    fit->add_option("--validation", fit_flags.validation, "validation dataset CSV; enables tuning")
        ->check(CLI::ExistingFile);
    fit->add_option("--estimator", fit_flags.estimator, "semi_efgm_joint | semi_efgm_nodewise | ggm | nonparanormal | oracle_mle");
    fit->add_option("--lambda", fit_flags.lambda, "penalty when not tuning")->check(CLI::NonNegativeNumber);

    EvaluateFlags eval_flags;
    std::string eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "score an estimate against a truth matrix or node labels");
    evaluate->add_option("--estimate", eval_flags.estimate, "estimate matrix CSV")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--truth", eval_flags.truth, "truth matrix CSV")->check(CLI::ExistingFile);
    evaluate->add_option("--labels", eval_flags.labels, "node,label CSV for top-k link scoring")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--topk", eval_flags.topk, "number of strongest links to score");
    evaluate->add_option("--threshold", eval_flags.threshold, "edge magnitude threshold");
    evaluate->add_option("--out", eval_out, "output directory");

    auto* replicate = app.add_subcommand("replicate", "run the replicated tuning and scoring protocol");
    add_common(replicate, rep_flags, true);

    auto* ratecheck = app.add_subcommand("ratecheck", "estimate a statistical rate exponent");
    add_common(ratecheck, rate_flags, true);

    IngestFlags ingest_flags;
    std::string ingest_out;
    auto* ingest = app.add_subcommand("ingest", "turn a price CSV into a windowed dataset");
    ingest->add_option("--input", ingest_flags.input, "dates x tickers CSV of closes")->required()->check(CLI::ExistingFile);
    ingest->add_option("--window", ingest_flags.window, "feature length")->check(CLI::PositiveNumber);
    ingest->add_option("--window-mode", ingest_flags.mode, "returns | prices")
        ->check(CLI::IsMember({"returns", "prices"}));
    ingest->add_option("--out", ingest_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) return cmd_simulate(sim_flags);
        if (*fit) return cmd_fit(fit_common, fit_flags);
        if (*evaluate) return cmd_evaluate(eval_flags, eval_out);
        if (*replicate) return cmd_replicate(rep_flags);
        if (*ratecheck) return cmd_ratecheck(rate_flags);
        if (*ingest) return cmd_ingest(ingest_flags, ingest_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
