// SPDX-License-Identifier: Apache-2.0
//
// paretogen command-line driver.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 data error, 4 numeric error, 5 infeasible budget.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "paretogen/config.hpp"
#include "paretogen/pipeline.hpp"

namespace fs = std::filesystem;
using namespace paretogen;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
};

ExperimentConfig resolve_config(const CommonFlags& f) {
    auto cfg = f.config_path.empty() ? ExperimentConfig{} : load_config(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (f.threads) cfg.threads = *f.threads;
    validate(cfg);
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_config = true) {
    if (with_config) cmd->add_option("--config", f.config_path, "experiment config (JSON); defaults apply to missing keys");
    cmd->add_option("--seed", f.seed, "global seed (overrides the config)");
    cmd->add_option("--out", f.out, "output directory (overrides the config)");
    cmd->add_option("--threads", f.threads, "worker threads; results do not depend on it");
}

fs::path ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
    return dir;
}

std::vector<std::size_t> parse_k_values(const std::string& text) {
    std::vector<std::size_t> ks;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || v < 2) throw ConfigError("--k-values entry '" + item + "' is not an integer >= 2");
        ks.push_back(v);
    }
    if (ks.empty()) throw ConfigError("--k-values is empty");
    return ks;
}

int run_pipeline_cmd(const CommonFlags& f) {
    const auto cfg = resolve_config(f);
    const auto run = run_pipeline(cfg, cfg.out_dir);
    std::cout << to_json(run.manifest).dump(2) << '\n';
    return 0;
}

int run_generate_cmd(const std::string& run_dir, double budget, const std::optional<std::uint64_t>& seed) {
    const auto t0 = Clock::now();
    const auto run = load_run(run_dir);
    auto result = generate_report(run, budget, seed.value_or(run.config.seed));
    result.report["wall_clock_seconds"] = seconds_since(t0);
    std::cout << result.report.dump(2) << '\n';
    return result.exit_code;
}

int run_histogram_cmd(const std::string& run_dir, const std::string& out, double budget, std::size_t n,
                      const std::optional<std::uint64_t>& seed) {
    if (n < 1) throw ConfigError("--n must be >= 1");
    const auto run = load_run(run_dir);
    const auto s = seed.value_or(run.config.seed);
    const auto samples =
        sample_costs(run.generator, run.oracles.cost, budget, n, run.config.inference.histogram_bins, s);
    const auto base =
        uniform_feasible_rate(run.oracles.space, run.oracles.cost, budget, run.config.enumeration_cap, s);
    const auto dir = ensure_dir(out.empty() ? run.dir.string() : out);
    write_text(dir / "histogram_samples.csv", samples_csv(samples));
    write_text(dir / "histogram_bins.csv", bins_csv(samples.bins));
    const Json summary = {{"budget", budget},
                          {"n", n},
                          {"seed", s},
                          {"feasible_fraction", samples.feasible_fraction()},
                          {"uniform_feasible_fraction", base.value},
                          {"uniform_rate_exact", base.exact},
                          {"samples_csv", (dir / "histogram_samples.csv").string()},
                          {"bins_csv", (dir / "histogram_bins.csv").string()}};
    write_text(dir / "histogram_summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int run_compare_cmd(const CommonFlags& f) {
    const auto cfg = resolve_config(f);
    const auto dir = ensure_dir(cfg.out_dir);
    const auto nag = run_pipeline(cfg, (dir / "nag").string());
    const auto report = run_compare(cfg, &nag);
    write_text(dir / "compare_report.json", to_json(report).dump(2) + "\n");
    write_text(dir / "compare_timings.json", timings_json(report).dump(2) + "\n");
    std::cout << to_json(report).dump(2) << '\n';
    return 0;
}

int run_ksweep_cmd(const CommonFlags& f, const std::string& k_values) {
    const auto cfg = resolve_config(f);
    const auto rows = run_ksweep(cfg, parse_k_values(k_values));
    const auto dir = ensure_dir(cfg.out_dir);
    const auto csv = ksweep_csv(rows);
    write_text(dir / "ksweep.csv", csv);
    std::cout << csv;
    return 0;
}

int run_import_cmd(const std::string& input, const std::string& output) {
    const auto bench = load_tabular(input);
    std::size_t distinct = 0;
    {
        auto [cost, quality] = tabular_oracles(bench);
        distinct = quality.listed().size();
    }
    const auto& space = bench.space;
    Json summary = {{"input", input},
                    {"rows", bench.records.size()},
                    {"distinct_architectures", distinct},
                    {"sites", space.num_sites()}};
    summary["space_size"] = space.overflowed() ? Json(nullptr) : Json(space.total_size());
    summary["complete"] = !space.overflowed() && distinct == space.total_size();
    if (!output.empty()) {
        if (const auto parent = fs::path(output).parent_path(); !parent.empty()) ensure_dir(parent.string());
        std::ostringstream out;
        write_tabular(out, space, bench.records);
        write_text(output, out.str());
        summary["output"] = output;
    }
    std::cout << summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paretogen: budget-conditioned Pareto-frontier architecture generation"};
    app.require_subcommand(1);

    CommonFlags pipeline_f, compare_f, ksweep_f;
    auto* pipeline = app.add_subcommand("pipeline", "collect records, train the evaluator and the generator");
    add_common(pipeline, pipeline_f);

    std::string run_dir, hist_out;
    double budget = 0.0;
    std::optional<std::uint64_t> gen_seed, hist_seed;
    auto* generate = app.add_subcommand("generate", "generate the best architecture for one budget");
    generate->add_option("--out,--run", run_dir, "run directory written by `pipeline`")->required();
    generate->add_option("--budget", budget, "target budget")->required();
    generate->add_option("--seed", gen_seed, "inference seed (defaults to the run seed)");

    std::string hist_run;
    double hist_budget = 0.0;
    std::size_t hist_n = 1000;
    auto* histogram = app.add_subcommand("histogram", "sample costs from the generator at one budget");
    histogram->add_option("--run", hist_run, "run directory written by `pipeline`")->required();
    histogram->add_option("--budget", hist_budget, "target budget")->required();
    histogram->add_option("--n", hist_n, "number of samples")->capture_default_str();
    histogram->add_option("--out", hist_out, "directory for the CSV outputs (defaults to the run directory)");
    histogram->add_option("--seed", hist_seed, "sampling seed (defaults to the run seed)");

    auto* compare = app.add_subcommand("compare", "NAG against independent search and reward variants");
    add_common(compare, compare_f);

    std::string k_values = "2,5,10";
    auto* ksweep = app.add_subcommand("ksweep", "rerun the pipeline for several grid sizes K");
    add_common(ksweep, ksweep_f);
    ksweep->add_option("--k-values", k_values, "comma-separated grid sizes")->capture_default_str();

    std::string import_in, import_out;
    auto* import = app.add_subcommand("import-bench", "validate and normalize a tabular benchmark CSV");
    import->add_option("input", import_in, "benchmark CSV")->required();
    import->add_option("--out", import_out, "write the normalized CSV here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorKind::Config);
    }

    try {
        if (*pipeline) return run_pipeline_cmd(pipeline_f);
        if (*generate) return run_generate_cmd(run_dir, budget, gen_seed);
        if (*histogram) return run_histogram_cmd(hist_run, hist_out, hist_budget, hist_n, hist_seed);
        if (*compare) return run_compare_cmd(compare_f);
        if (*ksweep) return run_ksweep_cmd(ksweep_f, k_values);
        if (*import) return run_import_cmd(import_in, import_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
