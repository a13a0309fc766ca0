// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <rapidjson/document.h>
#include <rapidjson/schema.h>
#include <rapidjson/stringbuffer.h>

#include "paretogen/pipeline.hpp"
#include "support.hpp"

using namespace paretogen;
namespace fs = std::filesystem;
using paretogen::testing::scratch_dir;
using paretogen::testing::tiny_config;

namespace {

// One persisted tiny run shared by the read-only tests below.
const PipelineRun& shared_run() {
    static const PipelineRun run = [] {
        auto cfg = tiny_config();
        const auto dir = scratch_dir("shared_run");
        cfg.out_dir = dir.string();
        return run_pipeline(cfg, dir.string());
    }();
    return run;
}

std::string slurp(const fs::path& p) { return read_text(p); }

std::size_t count_lines(const std::string& text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

/// Errors reported by the draft-04 validator, empty when the document conforms.
std::string schema_errors(const std::string& schema_text, const std::string& doc_text) {
    rapidjson::Document sd;
    if (sd.Parse(schema_text.c_str()).HasParseError()) return "schema does not parse";
    rapidjson::SchemaDocument schema(sd);
    rapidjson::Document d;
    if (d.Parse(doc_text.c_str()).HasParseError()) return "report does not parse";
    rapidjson::SchemaValidator validator(schema);
    if (d.Accept(validator)) return {};
    rapidjson::StringBuffer where, rule;
    validator.GetInvalidSchemaPointer().StringifyUriFragment(rule);
    validator.GetInvalidDocumentPointer().StringifyUriFragment(where);
    return std::string("violates ") + rule.GetString() + " ('" + validator.GetInvalidSchemaKeyword() + "') at " +
           where.GetString();
}

// stdout goes to `log`, stderr to `log` with ".err" appended.
int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd =
        std::string(PARETOGEN_CLI) + " " + args + " > " + log.string() + " 2> " + log.string() + ".err";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Pipeline, ManifestListsEveryArtifact) {
    const auto& run = shared_run();
    const fs::path dir = run.manifest.dir;
    const auto manifest = read_json(dir / "manifest.json");
    EXPECT_EQ(manifest.at("status"), "complete");
    EXPECT_EQ(manifest.at("config_hash"), config_hash(run.config));
    for (const char* role : {"config", "records", "cost_range", "grid", "evaluator", "evaluator_log", "generator",
                             "generator_history"}) {
        ASSERT_TRUE(manifest.at("artifacts").contains(role)) << role;
        EXPECT_TRUE(fs::exists(dir / manifest.at("artifacts").at(role).get<std::string>())) << role;
    }
    for (const char* phase :
         {"oracle", "collect_records", "estimate_cost_range", "build_grid", "train_evaluator", "train_generator"})
        EXPECT_TRUE(manifest.at("timings_seconds").contains(phase)) << phase;
    EXPECT_EQ(count_lines(slurp(dir / "records.csv")), run.config.records + 1);
}

TEST(Pipeline, EffectiveConfigIsWrittenAndReparses) {
    const auto& run = shared_run();
    const auto text = slurp(fs::path(run.manifest.dir) / "config.json");
    EXPECT_EQ(text, dump_config(run.config));
    EXPECT_EQ(dump_config(parse_config(text)), text);
}

TEST(Pipeline, RerunIsBitExact) {
    auto cfg = tiny_config();
    const auto dir = scratch_dir("rerun");
    cfg.out_dir = shared_run().config.out_dir;  // identical config text, different target directory
    run_pipeline(cfg, dir.string());
    const fs::path first = shared_run().manifest.dir;
    for (const char* f : {"config.json", "records.csv", "grid.json", "evaluator.params", "generator.params",
                          "generator_history.csv", "evaluator_log.csv"})
        EXPECT_EQ(slurp(first / f), slurp(dir / f)) << f;
}

TEST(Pipeline, DifferentSeedChangesCheckpoints) {
    auto cfg = tiny_config(4);
    const auto other = run_pipeline(cfg);
    EXPECT_FALSE(other.generator.params() == shared_run().generator.params());
}

TEST(Pipeline, TwoPointGridIsTheCostRange) {
    auto cfg = tiny_config();
    cfg.grid_size = 2;
    cfg.generator.max_steps = 5;
    const auto run = run_pipeline(cfg);
    ASSERT_EQ(run.grid.budgets.size(), 2u);
    EXPECT_EQ(run.grid.budgets.front(), run.range.lo);
    EXPECT_EQ(run.grid.budgets.back(), run.range.hi);
}

TEST(Pipeline, FailedPhaseIsRecorded) {
    const auto dir = scratch_dir("failed");
    const auto bench = dir / "flat.csv";
    std::ofstream(bench) << "a:2\n0,5,0.5\n1,5,0.6\n";  // every cost equal: no usable range
    auto cfg = tiny_config();
    cfg.oracle.kind = "tabular";
    cfg.oracle.path = bench.string();
    cfg.records = 2;
    const auto out = dir / "run";
    try {
        run_pipeline(cfg, out.string());
        FAIL() << "expected the cost-range phase to fail";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Data);
        EXPECT_NE(std::string(e.what()).find("estimate_cost_range"), std::string::npos) << e.what();
    }
    const auto manifest = read_json(out / "manifest.json");
    EXPECT_EQ(manifest.at("status"), "failed");
    EXPECT_EQ(manifest.at("failed_phase"), "estimate_cost_range");
    for (const auto& [role, path] : manifest.at("artifacts").items())
        EXPECT_TRUE(fs::exists(out / path.get<std::string>())) << role;
    EXPECT_THROW(load_run(out.string()), DataError);
}

TEST(Pipeline, MissingTabularFileFailsInOraclePhase) {
    auto cfg = tiny_config();
    cfg.oracle.kind = "tabular";
    cfg.oracle.path = "/nonexistent/bench.csv";
    const auto out = scratch_dir("missing_bench");
    EXPECT_THROW(run_pipeline(cfg, out.string()), Error);
    EXPECT_EQ(read_json(out / "manifest.json").at("failed_phase"), "oracle");
}

TEST(Generate, GridAndOffGridBudgetsAreFeasible) {
    const auto loaded = load_run(shared_run().manifest.dir);
    const auto& budgets = loaded.generator.budgets();
    for (std::size_t k = 0; k < budgets.size(); ++k) {
        const auto r = generate_report(loaded, budgets[k], 1);
        EXPECT_EQ(r.exit_code, 0);
        EXPECT_TRUE(r.report.at("feasible").get<bool>());
        EXPECT_LE(r.report.at("architecture").at("cost").get<double>(), budgets[k]);
        if (k + 1 < budgets.size()) {
            const double mid = 0.5 * (budgets[k] + budgets[k + 1]);
            const auto m = generate_report(loaded, mid, 1);
            EXPECT_EQ(m.exit_code, 0);
            EXPECT_LE(m.report.at("architecture").at("cost").get<double>(), mid);
            EXPECT_FALSE(m.report.at("clamped").get<bool>());
        }
    }
}

TEST(Generate, MatchesInMemoryInference) {
    const auto& run = shared_run();
    const auto loaded = load_run(run.manifest.dir);
    EXPECT_TRUE(loaded.generator.params() == run.generator.params());
    const double b = run.grid.budgets[1];
    const auto direct = infer(run.generator, b, run.oracles.cost, &run.oracles.quality, nullptr, run.config.inference, 9);
    EXPECT_EQ(generate_report(loaded, b, 9).report.at("architecture").at("tokens"), Json(direct.chosen.arch.tokens));
}

TEST(Generate, InfeasibleBudgetExitCode) {
    const auto loaded = load_run(shared_run().manifest.dir);
    const auto r = generate_report(loaded, loaded.oracles.cost.bounds().first * 0.5, 1);
    EXPECT_EQ(r.exit_code, exit_code(ErrorKind::Infeasible));
    EXPECT_FALSE(r.report.at("feasible").get<bool>());
    EXPECT_FALSE(r.report.at("near_miss").is_null());
}

TEST(Generate, MissingRunNamesThePath) {
    try {
        load_run("/nonexistent/run");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/run"), std::string::npos);
    }
}

TEST(Histogram, RowCountAndDeterminism) {
    const auto& run = shared_run();
    const double b = run.grid.budgets[2];
    const auto s = sample_costs(run.generator, run.oracles.cost, b, 250, 10, 5);
    EXPECT_EQ(count_lines(samples_csv(s)), 251u);
    EXPECT_EQ(count_lines(bins_csv(s.bins)), 11u);
    std::size_t binned = 0;
    for (auto c : s.bins.counts) binned += c;
    EXPECT_EQ(binned, 250u);
    EXPECT_EQ(samples_csv(s), samples_csv(sample_costs(run.generator, run.oracles.cost, b, 250, 10, 5)));
}

TEST(Histogram, UntrainedGeneratorMatchesUniformRate) {
    const ExperimentConfig cfg;
    const auto space = cfg.search_space();
    const auto [cost, quality] = make_synthetic(space, 1, cfg.oracle.tradeoff);
    const auto range = estimate_cost_range(collect_records(space, cost, quality, cfg.records, 1));
    const auto grid = build_grid(range, cfg.grid_size, cfg.budget_dim, 1);
    const GeneratorModel untrained(space, grid, cfg.generator_shape, 1);
    for (double b : {grid.budgets[2], 0.5 * (range.lo + range.hi), grid.budgets[7]}) {
        const auto s = sample_costs(untrained, cost, b, 1000, 20, 1);
        const auto base = uniform_feasible_rate(space, cost, b, cfg.enumeration_cap, 1);
        EXPECT_TRUE(base.exact);
        EXPECT_NEAR(s.feasible_fraction(), base.value, 0.05) << "budget " << b;
    }
}

TEST(Compare, ReportValidatesAgainstSchema) {
    auto cfg = tiny_config();
    const auto report = run_compare(cfg, &shared_run());
    ASSERT_EQ(report.methods.size(), cfg.compare_methods.size());
    const auto text = to_json(report).dump(2);
    const auto schema = slurp(fs::path(PARETOGEN_SOURCE_DIR) / "docs" / "compare_report.schema.json");
    EXPECT_EQ(schema_errors(schema, text), "");
    for (const auto& m : report.methods) {
        EXPECT_EQ(m.total_traces, cfg.grid_size * cfg.generator.traces_per_budget * cfg.generator.max_steps);
        EXPECT_EQ(m.budgets.size(), cfg.grid_size);
    }
    // the schema is strict enough to notice a broken report
    auto broken = to_json(report);
    broken["methods"][0].erase("hypervolume");
    EXPECT_NE(schema_errors(schema, broken.dump()), "");
}

TEST(Compare, DeterministicAndThreadIndependent) {
    auto cfg = tiny_config();
    cfg.compare_methods = {"nag", "independent", "multi_objective"};
    const auto a = to_json(run_compare(cfg, &shared_run()));
    cfg.threads = 3;
    const auto b = to_json(run_compare(cfg, &shared_run()));
    auto strip = [](Json j) {
        j.erase("config_hash");  // threads is part of the config text
        return j;
    };
    EXPECT_EQ(strip(a), strip(b));
}

TEST(KSweep, OneRowPerK) {
    auto cfg = tiny_config();
    cfg.generator.max_steps = 20;
    const auto rows = run_ksweep(cfg, {2, 4});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].k, 2u);
    EXPECT_EQ(rows[0].generator_steps, 40u);  // 4 * 20 / 2
    EXPECT_EQ(rows[1].generator_steps, 20u);
    EXPECT_EQ(rows[0].eval_budgets, rows[1].eval_budgets);
    EXPECT_EQ(count_lines(ksweep_csv(rows)), 3u);
    EXPECT_THROW(run_ksweep(cfg, {}), ConfigError);
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fs::path(scratch_dir("cli"));
        auto cfg = tiny_config();
        std::ofstream(*dir_ / "tiny.json") << dump_config(cfg);
    }
    static void TearDownTestSuite() { delete dir_; }
    static fs::path dir() { return *dir_; }
    static inline fs::path* dir_ = nullptr;
};

TEST_F(Cli, PipelineGenerateHistogram) {
    const auto run = dir() / "run";
    ASSERT_EQ(run_cli("pipeline --config " + (dir() / "tiny.json").string() + " --out " + run.string(),
                      dir() / "pipeline.log"),
              0)
        << slurp(dir() / "pipeline.log.err");
    ASSERT_TRUE(fs::exists(run / "manifest.json"));

    const auto budget = read_json(run / "grid.json").at("budgets").at(2).get<double>();
    EXPECT_EQ(run_cli("generate --run " + run.string() + " --budget " + std::to_string(budget), dir() / "gen.log"), 0)
        << slurp(dir() / "gen.log.err");
    const auto report = Json::parse(slurp(dir() / "gen.log"));
    EXPECT_TRUE(report.at("feasible").get<bool>());
    EXPECT_LT(report.at("wall_clock_seconds").get<double>(), 5.0);

    EXPECT_EQ(run_cli("generate --run " + run.string() + " --budget 0.001", dir() / "inf.log"),
              exit_code(ErrorKind::Infeasible));

    EXPECT_EQ(run_cli("histogram --run " + run.string() + " --budget " + std::to_string(budget) +
                          " --n 300 --out " + (dir() / "hist").string(),
                      dir() / "hist.log"),
              0)
        << slurp(dir() / "hist.log.err");
    EXPECT_EQ(count_lines(slurp(dir() / "hist" / "histogram_samples.csv")), 301u);
}

TEST_F(Cli, SeededPipelineIsReproducible) {
    const auto a = dir() / "a", b = dir() / "b";
    const auto cfg = (dir() / "tiny.json").string();
    ASSERT_EQ(run_cli("pipeline --config " + cfg + " --seed 8 --out " + a.string(), dir() / "a.log"), 0);
    ASSERT_EQ(run_cli("pipeline --config " + cfg + " --seed 8 --out " + b.string(), dir() / "b.log"), 0);
    EXPECT_EQ(slurp(a / "generator.params"), slurp(b / "generator.params"));
    EXPECT_EQ(slurp(a / "evaluator.params"), slurp(b / "evaluator.params"));
}

TEST_F(Cli, ErrorExitCodes) {
    const auto log = dir() / "err.log";
    EXPECT_EQ(run_cli("", log), exit_code(ErrorKind::Config));
    EXPECT_EQ(run_cli("frobnicate", log), exit_code(ErrorKind::Config));
    EXPECT_EQ(run_cli("pipeline --config " + (dir() / "absent.json").string(), log), exit_code(ErrorKind::Config));
    std::ofstream(dir() / "unknown.json") << R"({"seeed": 1})";
    EXPECT_EQ(run_cli("pipeline --config " + (dir() / "unknown.json").string(), log), exit_code(ErrorKind::Config));
    EXPECT_NE(slurp(log.string() + ".err").find("seeed"), std::string::npos);
    EXPECT_EQ(run_cli("ksweep --k-values 2,x", log), exit_code(ErrorKind::Config));
    EXPECT_EQ(run_cli("generate --run " + (dir() / "no_run").string() + " --budget 1", log),
              exit_code(ErrorKind::Data));
    std::ofstream(dir() / "bad.csv") << "a:2\n0,10,0.5\n1,20,1.2\n";
    EXPECT_EQ(run_cli("import-bench " + (dir() / "bad.csv").string(), log), exit_code(ErrorKind::Data));
    EXPECT_NE(slurp(log.string() + ".err").find("row 2"), std::string::npos) << slurp(log.string() + ".err");
}

TEST_F(Cli, ImportBenchNormalizes) {
    std::ofstream(dir() / "pct.csv") << "a:2,b:2\n0,0,10,71.5\n0,1,12,80\n1,0,11,65\n1,1,15,90\n";
    const auto out = dir() / "norm" / "bench.csv";
    ASSERT_EQ(run_cli("import-bench " + (dir() / "pct.csv").string() + " --out " + out.string(), dir() / "imp.log"), 0)
        << slurp(dir() / "imp.log.err");
    const auto summary = Json::parse(slurp(dir() / "imp.log"));
    EXPECT_TRUE(summary.at("complete").get<bool>());
    EXPECT_EQ(summary.at("rows"), 4);
    const auto bench = load_tabular(out.string());
    EXPECT_DOUBLE_EQ(bench.records[0].quality, 0.715);
}
