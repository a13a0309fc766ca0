// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "paretogen/budget.hpp"
#include "paretogen/config.hpp"
#include "paretogen/diffcore/checkpoint.hpp"
#include "paretogen/evaluator.hpp"
#include "paretogen/frontier.hpp"
#include "paretogen/generator.hpp"
#include "paretogen/oracle.hpp"

namespace paretogen {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Small utilities
// ---------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json read_json(const fs::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline std::string join_tokens(const Architecture& a, char sep = '-') {
    std::string s;
    for (std::size_t i = 0; i < a.tokens.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(a.tokens[i]);
    }
    return s;
}

/// JSON number, or null for NaN / infinity.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

/// Runs fn(0..n-1) on up to `threads` workers. Each index writes its own
/// output slot, so the result does not depend on the thread count.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::min(std::max<std::size_t>(threads, 1), std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next++) < n;) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Oracles and checkpoints
// ---------------------------------------------------------------------------

struct Oracles {
    SearchSpace space;
    CostModel cost;
    QualityOracle quality;
};

/// Builds the cost model and quality oracle named by the config. For a tabular
/// benchmark the space comes from the file and is written back into `cfg`.
inline Oracles build_oracles(ExperimentConfig& cfg) {
    if (cfg.oracle.kind == "tabular") {
        auto bench = load_tabular(cfg.oracle.path);
        auto [cost, quality] = tabular_oracles(bench);
        if (!quality.covers(bench.space))
            throw ConfigError("tabular benchmark '" + cfg.oracle.path +
                              "' does not score every architecture of its space");
        cfg.space = bench.space.sites();
        return {bench.space, std::move(cost), std::move(quality)};
    }
    auto space = cfg.search_space();
    auto [cost, quality] = make_synthetic(space, cfg.oracle_seed(), cfg.oracle.tradeoff);
    return {std::move(space), std::move(cost), std::move(quality)};
}

namespace detail {

inline void put_grid(diffcore::ParamStore& store, const std::vector<double>& budgets, const Matrix* embeddings) {
    auto& b = store.add("grid.budgets", 1, static_cast<Eigen::Index>(budgets.size()));
    for (std::size_t i = 0; i < budgets.size(); ++i) b.value(0, static_cast<Eigen::Index>(i)) = budgets[i];
    if (embeddings) store.add("grid.embedding", embeddings->rows(), embeddings->cols()).value = *embeddings;
}

/// Splits a checkpoint into its model tensors (prefix) and its grid tensors.
inline diffcore::ParamStore take_model(const diffcore::ParamStore& all, const std::string& prefix,
                                       std::vector<double>& budgets, Matrix* embeddings, const std::string& source) {
    if (!all.contains("grid.budgets")) throw DataError(source + ": checkpoint has no budget grid");
    const auto& b = all.at("grid.budgets").value;
    budgets.assign(b.data(), b.data() + b.size());
    if (embeddings) {
        if (!all.contains("grid.embedding")) throw DataError(source + ": checkpoint has no budget embedding table");
        *embeddings = all.at("grid.embedding").value;
    }
    diffcore::ParamStore model;
    for (const auto& [name, p] : all)
        if (name.rfind(prefix, 0) == 0) model.add(name, p.value.rows(), p.value.cols()).value = p.value;
    return model;
}

}  // namespace detail

inline void save_evaluator(const std::string& path, const EvaluatorModel& m) {
    auto store = m.params();
    detail::put_grid(store, m.grid().budgets, &m.grid().embeddings);
    diffcore::save_params(path, store);
}

inline EvaluatorModel load_evaluator(const std::string& path, const SearchSpace& space) {
    BudgetGrid grid;
    auto params = detail::take_model(diffcore::load_params(path), "eval.", grid.budgets, &grid.embeddings, path);
    return EvaluatorModel(space, std::move(grid), std::move(params));
}

inline void save_generator(const std::string& path, const GeneratorModel& m) {
    auto store = m.params();
    detail::put_grid(store, m.budgets(), nullptr);
    diffcore::save_params(path, store);
}

inline GeneratorModel load_generator(const std::string& path, const SearchSpace& space) {
    std::vector<double> budgets;
    auto params = detail::take_model(diffcore::load_params(path), "gen.", budgets, nullptr, path);
    return GeneratorModel(space, std::move(budgets), std::move(params));
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

using Timings = std::vector<std::pair<std::string, double>>;

struct RunManifest {
    std::string dir;
    std::string config_hash;
    std::vector<std::pair<std::string, std::string>> artifacts;  // role -> path relative to dir
    Timings timings;
    std::string failed_phase;
    Json summary = Json::object();
};

inline Json to_json(const RunManifest& m) {
    Json artifacts = Json::object();
    for (const auto& [k, v] : m.artifacts) artifacts[k] = v;
    Json timings = Json::object();
    for (const auto& [k, v] : m.timings) timings[k] = v;
    Json j = {{"format", "paretogen-run/1"},
              {"config_hash", m.config_hash},
              {"artifacts", artifacts},
              {"summary", m.summary},
              {"timings_seconds", timings}};
    j["status"] = m.failed_phase.empty() ? "complete" : "failed";
    if (!m.failed_phase.empty()) j["failed_phase"] = m.failed_phase;
    return j;
}

inline void write_manifest(const RunManifest& m) {
    write_text(fs::path(m.dir) / "manifest.json", to_json(m).dump(2) + "\n");
}

struct PipelineRun {
    ExperimentConfig config;
    Oracles oracles;
    std::vector<ScoredRecord> records;
    CostRange range;
    BudgetGrid grid;
    TrainedEvaluator evaluator;
    GeneratorModel generator;
    GeneratorHistory history;
    RunManifest manifest;
};

namespace detail {

inline std::string evaluator_log_csv(const TrainedEvaluator& te) {
    std::ostringstream out;
    out << "iteration,loss,heldout_agreement\n";
    for (const auto& e : te.log)
        out << e.iteration << ',' << detail::format_double(e.loss) << ',' << detail::format_double(e.heldout_agreement) << '\n';
    return out.str();
}

inline std::string history_csv(const GeneratorHistory& h) {
    std::ostringstream out;
    out << "step,budget_index,budget,mean_reward,mean_entropy\n";
    for (const auto& s : h.steps)
        for (std::size_t k = 0; k < h.budgets.size(); ++k)
            out << s.step << ',' << k << ',' << detail::format_double(h.budgets[k]) << ',' << detail::format_double(s.mean_reward[k])
                << ',' << detail::format_double(s.mean_entropy[k]) << '\n';
    return out.str();
}

}  // namespace detail

/// Records -> cost range -> budget grid -> evaluator -> generator. With a
/// non-empty `dir` every artifact and the manifest are written there; a phase
/// failure still leaves a manifest naming the failed phase.
inline PipelineRun run_pipeline(ExperimentConfig cfg, const std::string& dir = {}) {
    RunManifest man;
    man.dir = dir;
    const bool persist = !dir.empty();
    if (persist) {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
    }
    auto artifact = [&](const std::string& role, const std::string& file, const std::string& text) {
        if (!persist) return;
        write_text(fs::path(dir) / file, text);
        man.artifacts.emplace_back(role, file);
    };
    auto phase = [&](const char* name, auto&& fn) {
        const auto t0 = Clock::now();
        try {
            auto r = fn();
            man.timings.emplace_back(name, seconds_since(t0));
            return r;
        } catch (const Error& e) {
            man.failed_phase = name;
            if (persist) write_manifest(man);
            throw Error(e.kind(), std::string("phase '") + name + "': " + e.what());
        } catch (...) {
            man.failed_phase = name;
            if (persist) write_manifest(man);
            throw;
        }
    };

    auto oracles = phase("oracle", [&] { return build_oracles(cfg); });
    validate(cfg);
    man.config_hash = config_hash(cfg);
    artifact("config", "config.json", dump_config(cfg));

    auto records = phase("collect_records", [&] {
        auto r = collect_records(oracles.space, oracles.cost, oracles.quality, cfg.records, cfg.seed);
        std::ostringstream out;
        write_tabular(out, oracles.space, r);
        artifact("records", "records.csv", out.str());
        return r;
    });

    auto range = phase("estimate_cost_range", [&] {
        auto r = estimate_cost_range(records, cfg.lo_percentile, cfg.hi_percentile);
        artifact("cost_range", "cost_range.json",
                 Json{{"lo", r.lo}, {"hi", r.hi}, {"lo_percentile", cfg.lo_percentile},
                      {"hi_percentile", cfg.hi_percentile}}
                         .dump(2) + "\n");
        return r;
    });

    auto grid = phase("build_grid", [&] {
        auto g = build_grid(range, cfg.grid_size, cfg.budget_dim, cfg.seed);
        artifact("grid", "grid.json", Json{{"budgets", g.budgets}, {"embedding_dim", g.dim()}}.dump(2) + "\n");
        return g;
    });

    auto evaluator = phase("train_evaluator", [&] {
        auto te = train_evaluator(oracles.space, records, grid, cfg.evaluator, cfg.seed);
        if (persist) {
            save_evaluator((fs::path(dir) / "evaluator.params").string(), te.model);
            man.artifacts.emplace_back("evaluator", "evaluator.params");
        }
        artifact("evaluator_log", "evaluator_log.csv", detail::evaluator_log_csv(te));
        return te;
    });

    GeneratorModel generator(oracles.space, grid, cfg.generator_shape, cfg.seed);
    auto history = phase("train_generator", [&] {
        auto h = train_generator(generator, evaluator.model, cfg.generator, cfg.seed);
        if (persist) {
            save_generator((fs::path(dir) / "generator.params").string(), generator);
            man.artifacts.emplace_back("generator", "generator.params");
        }
        artifact("generator_history", "generator_history.csv", detail::history_csv(h));
        return h;
    });

    man.summary = {{"records", records.size()},
                   {"cost_range", {range.lo, range.hi}},
                   {"budgets", grid.budgets},
                   {"evaluator_iterations", evaluator.iterations},
                   {"evaluator_initial_loss", evaluator.initial_loss},
                   {"evaluator_final_loss", evaluator.final_loss},
                   {"evaluator_heldout_agreement", num(evaluator.heldout_agreement)},
                   {"generator_steps", history.steps.size()}};
    if (persist) write_manifest(man);

    return {std::move(cfg),      std::move(oracles),   std::move(records), range,
            std::move(grid),     std::move(evaluator), std::move(generator), std::move(history),
            std::move(man)};
}

/// A finished run reloaded from its directory.
struct LoadedRun {
    fs::path dir;
    Json manifest;
    ExperimentConfig config;
    Oracles oracles;
    GeneratorModel generator;
};

/// `where` is a run directory or the path of its manifest.json.
inline LoadedRun load_run(const std::string& where) {
    fs::path dir = where;
    if (fs::is_regular_file(dir)) dir = dir.parent_path();
    const auto manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw DataError("missing run manifest '" + manifest_path.string() + "'");
    auto manifest = read_json(manifest_path);
    if (manifest.value("status", "") != "complete")
        throw DataError("run in '" + dir.string() + "' did not complete (failed phase: " +
                        manifest.value("failed_phase", std::string("unknown")) + ")");
    const auto& arts = manifest.at("artifacts");
    auto path_of = [&](const char* role) {
        if (!arts.contains(role)) throw DataError(manifest_path.string() + ": no '" + role + "' artifact listed");
        return dir / arts.at(role).get<std::string>();
    };
    auto cfg = load_config(path_of("config").string());
    auto oracles = build_oracles(cfg);
    auto generator = load_generator(path_of("generator").string(), oracles.space);
    return {dir, std::move(manifest), std::move(cfg), std::move(oracles), std::move(generator)};
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

inline Json to_json(const ScoredRecord& r) {
    return {{"tokens", r.arch.tokens}, {"cost", num(r.cost)}, {"quality", num(r.quality)}};
}

struct GenerateResult {
    Json report;
    int exit_code = 0;
};

/// Best-of-n inference at one budget. Infeasible budgets produce a report with
/// the near miss and the infeasibility exit code instead of throwing.
inline GenerateResult generate_report(const LoadedRun& run, double budget, std::uint64_t seed) {
    const auto t0 = Clock::now();
    GenerateResult out;
    try {
        const auto rep = infer(run.generator, budget, run.oracles.cost, &run.oracles.quality, nullptr,
                               run.config.inference, seed);
        out.report = {{"budget", budget},
                      {"feasible", true},
                      {"clamped", rep.clamped},
                      {"architecture", to_json(rep.chosen)},
                      {"feasibility_rate", rep.feasibility_rate},
                      {"first_round_feasibility", rep.first_round_feasibility},
                      {"rounds", rep.rounds},
                      {"sampled", rep.sampled}};
    } catch (const InfeasibleBudgetError& e) {
        out.report = {{"budget", budget}, {"feasible", false}, {"error", e.what()}};
        out.report["near_miss"] = e.near_miss() ? to_json(*e.near_miss()) : Json(nullptr);
        out.exit_code = exit_code(e.kind());
    }
    out.report["seed"] = seed;
    out.report["wall_clock_seconds"] = seconds_since(t0);
    return out;
}

// ---------------------------------------------------------------------------
// histogram
// ---------------------------------------------------------------------------

struct CostSamples {
    double budget = 0.0;
    std::vector<Architecture> archs;
    std::vector<double> costs;
    std::size_t feasible = 0;
    Histogram bins;

    double feasible_fraction() const {
        return costs.empty() ? 0.0 : static_cast<double>(feasible) / static_cast<double>(costs.size());
    }
};

/// n raw policy samples at `budget` (no filtering).
inline CostSamples sample_costs(const GeneratorModel& model, const CostModel& cost, double budget, std::size_t n,
                                std::size_t bins, std::uint64_t seed) {
    CostSamples s;
    s.budget = budget;
    for (auto& tr : sample_policy(model, budget, derive_seed(seed, {stream::histogram}), n)) {
        const double c = cost(tr.arch);
        s.feasible += c <= budget;
        s.costs.push_back(c);
        s.archs.push_back(std::move(tr.arch));
    }
    s.bins = make_histogram(s.costs, bins);
    return s;
}

struct UniformRate {
    double value = 0.0;
    bool exact = false;
};

/// Feasible fraction of the space: exact by enumeration when under the cap,
/// otherwise a 10,000-sample estimate.
inline UniformRate uniform_feasible_rate(const SearchSpace& space, const CostModel& cost, double budget,
                                         std::uint64_t cap, std::uint64_t seed) {
    std::size_t ok = 0, n = 0;
    if (!space.overflowed() && space.total_size() <= cap) {
        for (const auto& a : enumerate(space, cap)) {
            ok += cost(a) <= budget;
            ++n;
        }
        return {static_cast<double>(ok) / static_cast<double>(n), true};
    }
    for (const auto& a : sample_uniform(space, derive_seed(seed, {stream::histogram, 1}), 10000)) {
        ok += cost(a) <= budget;
        ++n;
    }
    return {static_cast<double>(ok) / static_cast<double>(n), false};
}

inline std::string samples_csv(const CostSamples& s) {
    std::ostringstream out;
    out << "sample,cost,feasible,tokens\n";
    for (std::size_t i = 0; i < s.costs.size(); ++i)
        out << i << ',' << detail::format_double(s.costs[i]) << ',' << (s.costs[i] <= s.budget ? 1 : 0) << ','
            << join_tokens(s.archs[i]) << '\n';
    return out.str();
}

inline std::string bins_csv(const Histogram& h) {
    std::ostringstream out;
    out << "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        out << detail::format_double(h.edges[i]) << ',' << detail::format_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

struct BudgetOutcome {
    double budget = 0.0;
    bool feasible = false;
    ScoredRecord chosen;
    double regret = std::numeric_limits<double>::quiet_NaN();
    double better_fraction = std::numeric_limits<double>::quiet_NaN();
    double infer_feasibility = std::numeric_limits<double>::quiet_NaN();
    double sample_mean_cost = std::numeric_limits<double>::quiet_NaN();
    double sample_mean_quality = std::numeric_limits<double>::quiet_NaN();
    double sample_feasibility = std::numeric_limits<double>::quiet_NaN();
};

struct MethodResult {
    std::string name;
    std::string reward;
    std::string strategy;  // "pareto_frontier" or "independent"
    std::size_t total_traces = 0;
    std::vector<BudgetOutcome> budgets;
    double hypervolume = 0.0;
    double mean_quality = std::numeric_limits<double>::quiet_NaN();
    double mean_regret = std::numeric_limits<double>::quiet_NaN();
    double train_seconds = 0.0;
};

struct CompareReport {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> budgets;
    double ref_cost = 0.0;
    double ref_quality = 0.0;
    std::size_t true_front_size = 0;
    double true_front_hypervolume = 0.0;
    std::vector<double> uniform_feasibility;
    std::vector<ScoredRecord> optimum;
    std::vector<MethodResult> methods;

    const MethodResult* find(const std::string& name) const {
        for (const auto& m : methods)
            if (m.name == name) return &m;
        return nullptr;
    }
};

/// Front of the selected (cost, quality) points and its hypervolume.
inline double selection_hypervolume(const std::vector<BudgetOutcome>& outcomes, double ref_cost, double ref_q) {
    std::vector<FrontPoint> pts;
    for (const auto& o : outcomes)
        if (o.feasible) pts.push_back({o.chosen.cost, o.chosen.quality, o.chosen.arch});
    return hypervolume(nondominated(std::move(pts)), ref_cost, ref_q);
}

inline void finish_method(MethodResult& m, double ref_cost, double ref_q) {
    m.hypervolume = selection_hypervolume(m.budgets, ref_cost, ref_q);
    double q = 0.0, r = 0.0;
    std::size_t n = 0;
    for (const auto& o : m.budgets)
        if (o.feasible) {
            q += o.chosen.quality;
            r += o.regret;
            ++n;
        }
    if (n) {
        m.mean_quality = q / static_cast<double>(n);
        m.mean_regret = r / static_cast<double>(n);
    }
}

/// Inference plus raw-sample statistics of one policy at one budget.
inline BudgetOutcome assess(const GeneratorModel& model, const Oracles& o, const GroundTruth& gt, double budget,
                            const ExperimentConfig& cfg, std::uint64_t seed) {
    BudgetOutcome out;
    out.budget = budget;
    try {
        const auto rep = infer(model, budget, o.cost, &o.quality, nullptr, cfg.inference, seed);
        out.feasible = true;
        out.chosen = rep.chosen;
        out.infer_feasibility = rep.feasibility_rate;
        out.regret = gt.optimum(budget).quality - rep.chosen.quality;
        out.better_fraction = gt.better_fraction(budget, rep.chosen.quality);
    } catch (const InfeasibleBudgetError&) {
        out.feasible = false;
    }
    const auto s = sample_costs(model, o.cost, budget, cfg.compare_samples, cfg.inference.histogram_bins, seed);
    double q = 0.0, c = 0.0;
    for (std::size_t i = 0; i < s.archs.size(); ++i) {
        q += o.quality(s.archs[i]);
        c += s.costs[i];
    }
    out.sample_mean_cost = c / static_cast<double>(s.costs.size());
    out.sample_mean_quality = q / static_cast<double>(s.costs.size());
    out.sample_feasibility = s.feasible_fraction();
    return out;
}

/// NAG against the baselines under equal compute. Every method draws
/// K * N * steps training traces. `nag` reuses an existing pipeline run
/// (it must come from the same config); otherwise one is run in memory.
inline CompareReport run_compare(const ExperimentConfig& config, const PipelineRun* nag = nullptr) {
    std::optional<PipelineRun> own;
    if (!nag) {
        own = run_pipeline(config);
        nag = &*own;
    }
    const auto& cfg = nag->config;
    const auto& o = nag->oracles;
    const GroundTruth gt(o.space, o.cost, o.quality, cfg.enumeration_cap);

    CompareReport rep;
    rep.seed = cfg.seed;
    rep.config_hash = config_hash(cfg);
    rep.budgets = nag->grid.budgets;
    rep.ref_cost = 1.05 * gt.max_cost();
    rep.ref_quality = 0.0;
    const auto front = gt.front();
    rep.true_front_size = front.size();
    rep.true_front_hypervolume = hypervolume(front, rep.ref_cost, rep.ref_quality);
    for (double b : rep.budgets) {
        rep.uniform_feasibility.push_back(gt.feasible_fraction(b));
        rep.optimum.push_back(gt.optimum(b));
    }

    const std::size_t K = rep.budgets.size();
    const std::size_t traces = K * cfg.generator.traces_per_budget * cfg.generator.max_steps;

    auto assess_all = [&](const GeneratorModel& model, MethodResult& m) {
        for (std::size_t k = 0; k < K; ++k) m.budgets.push_back(assess(model, o, gt, rep.budgets[k], cfg, cfg.seed));
    };

    std::vector<std::string> names;
    for (const auto& n : cfg.compare_methods)
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    rep.methods.resize(names.size());

    std::optional<TrainedEvaluator> cost_only;
    if (std::find(names.begin(), names.end(), "pareto_dominance_no_acc") != names.end()) {
        auto ecfg = cfg.evaluator;
        ecfg.rule = DominanceRule::CostOnly;
        cost_only = train_evaluator(o.space, nag->records, nag->grid, ecfg, cfg.seed);
    }

    auto run_method = [&](std::size_t i) {
        const auto t0 = Clock::now();
        auto& m = rep.methods[i];
        m.name = names[i];
        m.total_traces = traces;
        if (m.name == "nag") {
            m.reward = to_string(RewardKind::ParetoDominance);
            m.strategy = "pareto_frontier";
            assess_all(nag->generator, m);
        } else if (m.name == "independent") {
            m.reward = to_string(RewardKind::ParetoDominance);
            m.strategy = "independent";
            const auto reward = evaluator_reward(nag->evaluator.model);
            for (std::size_t k = 0; k < K; ++k) {
                const double b = rep.budgets[k];
                const auto seed = derive_seed(cfg.seed, {stream::independent, k});
                try {
                    auto r = independent_search(o.space, o.cost, o.quality, b, reward, cfg.generator_shape,
                                                cfg.generator, cfg.inference, seed);
                    m.budgets.push_back(assess(r.model, o, gt, b, cfg, cfg.seed));
                } catch (const InfeasibleBudgetError&) {
                    BudgetOutcome miss;
                    miss.budget = b;
                    m.budgets.push_back(miss);
                }
            }
        } else {
            const RewardSpec spec{reward_kind_from_string(m.name), cfg.reward_weight};
            m.reward = m.name;
            m.strategy = "pareto_frontier";
            const EvaluatorModel* ev = spec.kind == RewardKind::ParetoDominanceNoAcc ? &cost_only->model
                                       : spec.kind == RewardKind::ParetoDominance     ? &nag->evaluator.model
                                                                                      : nullptr;
            GeneratorModel g(o.space, nag->grid, cfg.generator_shape, cfg.seed);
            train_generator(g, make_reward_fn(spec, o.cost, o.quality, ev), cfg.generator, cfg.seed);
            assess_all(g, m);
        }
        m.train_seconds = seconds_since(t0);
        finish_method(m, rep.ref_cost, rep.ref_quality);
    };
    parallel_for(names.size(), cfg.threads, run_method);
    return rep;
}

inline Json to_json(const BudgetOutcome& b) {
    Json j = {{"budget", b.budget},
              {"feasible", b.feasible},
              {"regret", num(b.regret)},
              {"better_fraction", num(b.better_fraction)},
              {"infer_feasibility", num(b.infer_feasibility)},
              {"sample_mean_cost", num(b.sample_mean_cost)},
              {"sample_mean_quality", num(b.sample_mean_quality)},
              {"sample_feasibility", num(b.sample_feasibility)}};
    j["architecture"] = b.feasible ? to_json(b.chosen) : Json(nullptr);
    return j;
}

inline Json to_json(const CompareReport& r) {
    Json methods = Json::array();
    for (const auto& m : r.methods) {
        Json per = Json::array();
        for (const auto& b : m.budgets) per.push_back(to_json(b));
        methods.push_back({{"name", m.name},
                           {"reward", m.reward},
                           {"strategy", m.strategy},
                           {"total_traces", m.total_traces},
                           {"hypervolume", m.hypervolume},
                           {"mean_quality", num(m.mean_quality)},
                           {"mean_regret", num(m.mean_regret)},
                           {"per_budget", per}});
    }
    Json optimum = Json::array();
    for (const auto& o : r.optimum) optimum.push_back(to_json(o));
    return {{"format", "paretogen-compare/1"},
            {"seed", r.seed},
            {"config_hash", r.config_hash},
            {"budgets", r.budgets},
            {"reference_point", {{"cost", r.ref_cost}, {"quality", r.ref_quality}}},
            {"true_front", {{"size", r.true_front_size}, {"hypervolume", r.true_front_hypervolume}}},
            {"uniform_feasibility", r.uniform_feasibility},
            {"optimum", optimum},
            {"methods", methods}};
}

/// Wall-clock seconds per method; kept out of the report for reproducibility.
inline Json timings_json(const CompareReport& r) {
    Json t = Json::object();
    for (const auto& m : r.methods) t[m.name] = m.train_seconds;
    return t;
}

// ---------------------------------------------------------------------------
// K sweep
// ---------------------------------------------------------------------------

struct KSweepRow {
    std::size_t k = 0;
    std::size_t generator_steps = 0;
    double hypervolume = 0.0;
    double mid_budget = 0.0;
    double mid_quality = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> eval_budgets;
    std::vector<double> qualities;  // NaN where inference found nothing feasible
};

/// Steps that keep K * N * steps equal to the reference run's total.
inline std::size_t equal_compute_steps(const ExperimentConfig& ref, std::size_t k) {
    const double total = static_cast<double>(ref.grid_size) * static_cast<double>(ref.generator.max_steps);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(total / static_cast<double>(k))));
}

/// Quality of the inferred architecture at `budget`, NaN when infeasible.
inline std::optional<ScoredRecord> try_infer(const GeneratorModel& g, const Oracles& o, double budget,
                                             const ExperimentConfig& cfg) {
    try {
        return infer(g, budget, o.cost, &o.quality, nullptr, cfg.inference, cfg.seed).chosen;
    } catch (const InfeasibleBudgetError&) {
        return std::nullopt;
    }
}

/// Full pipeline per K with the same seed and equal total generator compute.
/// Every K is scored on the reference config's budget grid (grid_size points)
/// and at the midpoint of the cost range.
inline std::vector<KSweepRow> run_ksweep(const ExperimentConfig& ref, const std::vector<std::size_t>& ks,
                                         const PipelineRun* reuse = nullptr) {
    if (ks.empty()) throw ConfigError("k sweep needs at least one K");
    std::vector<KSweepRow> rows(ks.size());
    std::optional<double> ref_cost;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        auto cfg = ref;
        cfg.grid_size = ks[i];
        cfg.generator.max_steps = equal_compute_steps(ref, ks[i]);
        std::optional<PipelineRun> own;
        const PipelineRun* run = reuse;
        if (!run || run->config.grid_size != cfg.grid_size || run->config.generator.max_steps != cfg.generator.max_steps ||
            run->config.seed != cfg.seed) {
            own = run_pipeline(cfg);
            run = &*own;
        }
        if (!ref_cost) ref_cost = 1.05 * run->oracles.cost.bounds().second;
        auto& row = rows[i];
        row.k = ks[i];
        row.generator_steps = cfg.generator.max_steps;
        row.eval_budgets = even_budgets(run->range, ref.grid_size);
        row.mid_budget = 0.5 * (run->range.lo + run->range.hi);
        std::vector<BudgetOutcome> outs;
        for (double b : row.eval_budgets) {
            const auto r = try_infer(run->generator, run->oracles, b, cfg);
            row.qualities.push_back(r ? r->quality : std::numeric_limits<double>::quiet_NaN());
            BudgetOutcome bo;
            bo.budget = b;
            if (r) {
                bo.feasible = true;
                bo.chosen = *r;
            }
            outs.push_back(std::move(bo));
        }
        if (const auto r = try_infer(run->generator, run->oracles, row.mid_budget, cfg)) row.mid_quality = r->quality;
        row.hypervolume = selection_hypervolume(outs, *ref_cost, 0.0);
    }
    return rows;
}

inline std::string ksweep_csv(const std::vector<KSweepRow>& rows) {
    std::ostringstream out;
    out << "k,generator_steps,hypervolume,mid_budget,mid_quality";
    if (!rows.empty())
        for (std::size_t j = 0; j < rows.front().eval_budgets.size(); ++j) out << ",q" << j;
    out << '\n';
    for (const auto& r : rows) {
        out << r.k << ',' << r.generator_steps << ',' << detail::format_double(r.hypervolume) << ','
            << detail::format_double(r.mid_budget) << ',' << detail::format_double(r.mid_quality);
        for (double q : r.qualities) out << ',' << detail::format_double(q);
        out << '\n';
    }
    return out.str();
}

}  // namespace paretogen
