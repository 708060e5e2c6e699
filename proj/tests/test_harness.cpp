#include "support/oracles.hpp"

#include <semiefgm/harness/experiment.hpp>
#include <semiefgm/harness/ingest.hpp>
#include <semiefgm/harness/report.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace semiefgm;
using namespace semiefgm::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("semiefgm_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string config_error(const json& doc)
{
    try {
        parse_config(doc);
    } catch (const InvalidInput& e) {
        return e.what();
    }
    return "";
}

json small_experiment(const std::vector<std::string>& estimators, int reps)
{
    return {{"seed", 2024},
            {"truth", {{"kind", "model1"}, {"p", 20}}},
            {"n", 200},
            {"replications", reps},
            {"estimators", estimators},
            {"tuning", {{"sigma", {1.0}}, {"m", {1.0}}, {"lambda", {{"count", 6}, {"ratio", 0.05}}}}},
            {"gibbs", {{"burn_in", 100}, {"thin", 2}}}};
}

} // namespace

TEST(Config, SeedIsMandatory) { EXPECT_NE(config_error(json::object()).find("'seed'"), std::string::npos); }

TEST(Config, ErrorsNameTheField)
{
    EXPECT_NE(config_error({{"seed", 1}, {"n", 1}}).find("'n'"), std::string::npos);
    EXPECT_NE(config_error({{"seed", 1}, {"truth", {{"kind", "tree"}}}}).find("'truth.kind'"), std::string::npos);
    EXPECT_NE(config_error({{"seed", 1}, {"tuning", {{"sigma", json::array()}}}}).find("'tuning.sigma'"),
              std::string::npos);
    EXPECT_NE(config_error({{"seed", 1}, {"tuning", {{"lambda", {{"values", {0.1, 0.2}}}}}}})
                  .find("'tuning.lambda.values'"),
              std::string::npos);
    EXPECT_NE(config_error({{"seed", 1}, {"gibbs", {{"thin", 0}}}}).find("'gibbs.thin'"), std::string::npos);
    EXPECT_NE(config_error({{"seed", 1}, {"n", "many"}}).find("'n'"), std::string::npos);
    EXPECT_NE(config_error({{"seed", 1}, {"model", {{"kernel", {{"family", "heat"}, {"sigma", -1.0}}}}}})
                  .find("model.kernel"),
              std::string::npos);
}

TEST(Config, DefaultsAndHashStability)
{
    const ExperimentConfig a = parse_config({{"seed", 5}});
    EXPECT_EQ(a.n, 200);
    EXPECT_EQ(a.replications, 10);
    EXPECT_EQ(a.model.grid_points, 401);
    EXPECT_EQ(a.tuning.lambda.count, 20);
    const ExperimentConfig b = parse_config(json::parse(R"({"seed": 5})"));
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_NE(config_hash(a), config_hash(parse_config({{"seed", 6}})));
}

TEST(Io, MatrixCsvRoundTripIsExact)
{
    const fs::path dir = scratch("matrix_io");
    Rng rng(1);
    const Matrix m = gen::gaussian_matrix(rng, 5, 5) * 1e-3;
    write_matrix_csv(dir / "m.csv", m);
    EXPECT_EQ(read_matrix_csv(dir / "m.csv"), m);
}

TEST(Io, DatasetCsvRoundTripIsExact)
{
    const fs::path dir = scratch("dataset_io");
    Rng rng(2);
    const Dataset d = Dataset::from_values(gen::gaussian_matrix(rng, 6, 3 * 4), 4);
    write_dataset_csv(dir / "d.csv", d);
    const Dataset back = read_dataset_csv(dir / "d.csv");
    EXPECT_EQ(back.n(), 6);
    EXPECT_EQ(back.p(), 3);
    EXPECT_EQ(back.feature_dim(), 4);
    for (Index i = 0; i < 6; ++i)
        for (Index s = 0; s < 3; ++s)
            for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(back.variate(i, s)[k], d.variate(i, s)[k]);
}

TEST(Ingest, FullHistoryGivesFloorSampleCount)
{
    const fs::path dir = scratch("ingest_long");
    std::ostringstream csv;
    csv << "date,AAA,BBB,CCC\n";
    Rng rng(3);
    double a = 100, b = 50, c = 10;
    for (int t = 0; t < 1261; ++t) {
        csv << "d" << t << ',' << format_double(a) << ',' << format_double(b) << ',' << format_double(c) << '\n';
        a *= std::exp(0.01 * rng.normal());
        b *= std::exp(0.02 * rng.normal());
        c *= std::exp(0.015 * rng.normal());
    }
    write_text(dir / "prices.csv", csv.str());
    const IngestResult r = ingest_prices({dir / "prices.csv", 5, WindowMode::returns});
    EXPECT_EQ(r.data.n(), 252);
    EXPECT_EQ(r.data.p(), 3);
    EXPECT_EQ(r.data.feature_dim(), 5);
    EXPECT_TRUE(r.dropped_tickers.empty());
    for (Index i = 0; i < r.data.n(); ++i) {
        const auto v = r.data.variate(i, 1);
        double norm2 = 0.0;
        for (double x : v) norm2 += x * x;
        EXPECT_NEAR(norm2, 1.0, 1e-12);
    }
}

TEST(Ingest, ToyPricesMatchHandComputedReturns)
{
    const fs::path dir = scratch("ingest_toy");
    write_text(dir / "p.csv", "date,X,Y\n1,100,20\n2,110,19\n3,99,21\n4,120,18\n5,118,22\n");
    const IngestResult r = ingest_prices({dir / "p.csv", 2, WindowMode::returns});
    ASSERT_EQ(r.data.n(), 2);
    ASSERT_EQ(r.tickers, (std::vector<std::string>{"X", "Y"}));
    const double x[4] = {std::log(1.1), std::log(0.9), std::log(120.0 / 99.0), std::log(118.0 / 120.0)};
    const double y[4] = {std::log(0.95), std::log(21.0 / 19.0), std::log(18.0 / 21.0), std::log(22.0 / 18.0)};
    for (Index i = 0; i < 2; ++i) {
        const double nx = std::hypot(x[2 * i], x[2 * i + 1]);
        const double ny = std::hypot(y[2 * i], y[2 * i + 1]);
        for (std::size_t k = 0; k < 2; ++k) {
            EXPECT_NEAR(r.data.variate(i, 0)[k], x[2 * i + static_cast<Index>(k)] / nx, 1e-12);
            EXPECT_NEAR(r.data.variate(i, 1)[k], y[2 * i + static_cast<Index>(k)] / ny, 1e-12);
        }
    }
}

TEST(Ingest, PricesModeUsesClosesAfterEachReturnDate)
{
    const fs::path dir = scratch("ingest_prices");
    write_text(dir / "p.csv", "date,X,Y\n1,3,1\n2,4,2\n3,6,2\n");
    const IngestResult r = ingest_prices({dir / "p.csv", 2, WindowMode::prices});
    ASSERT_EQ(r.data.n(), 1);
    EXPECT_NEAR(r.data.variate(0, 0)[0], 4.0 / std::hypot(4.0, 6.0), 1e-15);
    EXPECT_NEAR(r.data.variate(0, 1)[1], 2.0 / std::hypot(2.0, 2.0), 1e-15);
}

TEST(Ingest, ConstantTickerDropped)
{
    const fs::path dir = scratch("ingest_const");
    write_text(dir / "p.csv", "date,X,Y,Z\n1,100,5,7\n2,101,5,8\n3,99,5,6\n4,103,5,9\n5,104,5,8\n");
    const IngestResult r = ingest_prices({dir / "p.csv", 2, WindowMode::returns});
    ASSERT_EQ(r.dropped_tickers.size(), 1u);
    EXPECT_EQ(r.dropped_tickers[0].ticker, "Y");
    EXPECT_EQ(r.tickers, (std::vector<std::string>{"X", "Z"}));
}

TEST(Ingest, MissingRowDroppedAndShortTickerRemoved)
{
    const fs::path dir = scratch("ingest_missing");
    write_text(dir / "p.csv", "date,X,Y,S\n1,100,5,\n2,101,6,3\n3,,7,\n4,103,6,\n5,104,8,\n6,102,7,\n");
    const IngestResult r = ingest_prices({dir / "p.csv", 2, WindowMode::returns});
    ASSERT_EQ(r.dropped_tickers.size(), 1u);
    EXPECT_EQ(r.dropped_tickers[0].ticker, "S");
    EXPECT_EQ(r.dropped_rows, (std::vector<std::size_t>{2}));
    EXPECT_EQ(r.warnings.size(), 1u);
    EXPECT_EQ(r.rows_used, 5u);
    EXPECT_EQ(r.data.n(), 2);
}

TEST(Ingest, BadWindowModeRejected) { EXPECT_THROW(window_mode_from_string("levels"), InvalidInput); }

TEST(Report, EmptyResultsWriteManifestOnly)
{
    const fs::path dir = scratch("report_empty");
    ExperimentReport report;
    report.config = parse_config({{"seed", 3}});
    EXPECT_EQ(emit_report(report, dir), kExitNoop);
    EXPECT_TRUE(fs::exists(dir / "manifest.json"));
    EXPECT_FALSE(fs::exists(dir / "metrics.csv"));
    EXPECT_EQ(read_json(dir / "manifest.json").at("status"), "noop");
}

TEST(Experiment, SingleReplicateGgmSmoke)
{
    const fs::path dir = scratch("report_one");
    const ExperimentConfig cfg = parse_config(small_experiment({"ggm"}, 1));
    const ExperimentReport report = run_replicated_experiment(cfg);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(emit_report(report, dir), kExitOk);
    const auto metrics = read_csv(dir / "metrics.csv");
    EXPECT_EQ(metrics.size(), 2u);
    const auto summary = read_csv(dir / "summary.csv");
    ASSERT_EQ(summary.size(), 2u);
    EXPECT_EQ(summary[1][0], "ggm");
    const json manifest = read_json(dir / "manifest.json");
    EXPECT_TRUE(manifest.at("train_validation_disjoint").get<bool>());
    EXPECT_EQ(manifest.at("config_hash"), config_hash(cfg));
}

TEST(Experiment, FrequencyCountsBoundedByReplications)
{
    const fs::path dir = scratch("report_ten");
    const ExperimentConfig cfg = parse_config(small_experiment({"nonparanormal"}, 10));
    const ExperimentReport report = run_replicated_experiment(cfg);
    emit_report(report, dir);
    const Matrix counts = read_matrix_csv(dir / "frequency_map_nonparanormal.csv");
    EXPECT_GE(counts.minCoeff(), 0.0);
    EXPECT_LE(counts.maxCoeff(), 10.0);
    EXPECT_EQ(read_csv(dir / "metrics.csv").size(), 11u);
}

TEST(Experiment, RerunIsByteIdenticalAcrossThreadCounts)
{
    json doc = small_experiment({"semi_efgm_joint", "semi_efgm_nodewise", "ggm"}, 2);
    const fs::path a = scratch("determinism_a"), b = scratch("determinism_b");
    emit_report(run_replicated_experiment(parse_config(doc)), a);
    doc["threads"] = 2;
    emit_report(run_replicated_experiment(parse_config(doc)), b);
    for (const char* name : {"metrics.csv", "summary.csv", "frequency_map_semi_efgm_joint.csv",
                             "frequency_map_semi_efgm_nodewise.csv", "frequency_map_ggm.csv"})
        EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
}

TEST(Experiment, TrainAndValidationSeedsDisjoint)
{
    const ExperimentConfig cfg = parse_config({{"seed", 77}, {"replications", 50}});
    std::vector<SeedLineage> seeds;
    for (int r = 0; r < 50; ++r) seeds.push_back(replicate_seeds(cfg, r));
    EXPECT_TRUE(lineage_disjoint(seeds));
    EXPECT_NE(truth_seed(cfg), seeds[0].train);
}

#ifdef SEMIEFGM_CLI_PATH
namespace {

int run_cli(const std::string& args)
{
    const std::string cmd = std::string("\"") + SEMIEFGM_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Cli, SimulateFitEvaluatePipeline)
{
    const fs::path dir = scratch("cli");
    write_json(dir / "cfg.json", small_experiment({"ggm"}, 1));
    const std::string cfg = (dir / "cfg.json").string();
    ASSERT_EQ(run_cli("simulate --config " + cfg + " --out " + (dir / "sim").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "sim" / "truth.csv"));
    EXPECT_TRUE(fs::exists(dir / "sim" / "validation_0.csv"));
    ASSERT_EQ(run_cli("fit --config " + cfg + " --data " + (dir / "sim" / "train_0.csv").string() +
                      " --estimator ggm --lambda 0.05 --out " + (dir / "fit").string()),
              0);
    ASSERT_EQ(run_cli("evaluate --estimate " + (dir / "fit" / "estimate.csv").string() + " --truth " +
                      (dir / "sim" / "truth.csv").string() + " --out " + (dir / "eval").string()),
              0);
    EXPECT_EQ(read_csv(dir / "eval" / "evaluation.csv").size(), 2u);
}

TEST(Cli, ReplicateTwiceIsByteIdentical)
{
    const fs::path dir = scratch("cli_replicate");
    write_json(dir / "cfg.json", small_experiment({"ggm", "nonparanormal"}, 2));
    const std::string cfg = (dir / "cfg.json").string();
    ASSERT_EQ(run_cli("replicate --config " + cfg + " --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run_cli("replicate --config " + cfg + " --threads 2 --out " + (dir / "b").string()), 0);
    for (const char* name : {"metrics.csv", "summary.csv", "frequency_map_ggm.csv"})
        EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
}

TEST(Cli, IngestWritesDatasetAndTickers)
{
    const fs::path dir = scratch("cli_ingest");
    write_text(dir / "p.csv", "date,X,Y\n1,100,20\n2,110,19\n3,99,21\n4,120,18\n5,118,22\n");
    ASSERT_EQ(run_cli("ingest --input " + (dir / "p.csv").string() + " --window 2 --out " + (dir / "o").string()), 0);
    EXPECT_EQ(read_dataset_csv(dir / "o" / "dataset.csv").n(), 2);
}

TEST(Cli, ErrorsExitNonZero)
{
    const fs::path dir = scratch("cli_errors");
    write_json(dir / "bad.json", {{"n", 5}});
    EXPECT_EQ(run_cli("replicate --config " + (dir / "bad.json").string()), 2);
    EXPECT_NE(run_cli("no-such-command"), 0);
    EXPECT_EQ(run_cli("--version"), 0);
}
#endif
