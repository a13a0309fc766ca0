// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "paretogen/evaluator.hpp"
#include "paretogen/frontier.hpp"
#include "paretogen/generator.hpp"
#include "paretogen/space.hpp"

namespace paretogen {

using Json = nlohmann::json;

struct OracleConfig {
    std::string kind = "synthetic";  // "synthetic" | "tabular"
    std::optional<std::uint64_t> seed;  // synthetic landscape seed; defaults to the run seed
    double tradeoff = 0.8;
    std::string path;  // tabular benchmark CSV
};

/// Every knob of an experiment. Defaults are the desk-scale reference run:
/// synthetic [4]^8 space, M=2000, K=10, N=16, 3000 generator steps.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "run";
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;
    std::size_t threads = 1;

    std::vector<Site> space = default_space();
    OracleConfig oracle;

    std::size_t records = 2000;
    double lo_percentile = 1.0;
    double hi_percentile = 99.0;

    std::size_t grid_size = 10;
    Eigen::Index budget_dim = 64;

    EvaluatorConfig evaluator;
    GeneratorShape generator_shape;
    GeneratorTrainingConfig generator = reference_generator();
    InferenceConfig inference;

    double reward_weight = -0.07;
    std::vector<std::string> compare_methods = {"nag",
                                                "independent",
                                                "pareto_dominance_no_acc",
                                                "multi_objective",
                                                "multi_objective_absolute",
                                                "oracle_quality"};
    std::size_t compare_samples = 1000;

    /// The library default entropy weight (0.01) lets the reference policy
    /// collapse onto cheap, conservative architectures; 0.2 keeps it exploring.
    static GeneratorTrainingConfig reference_generator() {
        GeneratorTrainingConfig g;
        g.entropy_weight = 0.2;
        return g;
    }

    static std::vector<Site> default_space() {
        std::vector<Site> s;
        for (int i = 0; i < 8; ++i) s.push_back({"s" + std::to_string(i), 4});
        return s;
    }

    std::uint64_t oracle_seed() const { return oracle.seed.value_or(seed); }
    SearchSpace search_space() const { return SearchSpace(space); }
};

namespace detail {

inline std::string rule_name(DominanceRule r) { return r == DominanceRule::Full ? "full" : "cost_only"; }

inline DominanceRule rule_from_name(const std::string& s) {
    if (s == "full") return DominanceRule::Full;
    if (s == "cost_only") return DominanceRule::CostOnly;
    throw ConfigError("unknown dominance rule '" + s + "'");
}

/// Reads `key` from `obj` into `out` if present; remembers the key as consumed.
class Reader {
public:
    Reader(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
        if (!obj_.is_object()) throw ConfigError(where_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.push_back(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    const Json* child(const char* key) {
        seen_.push_back(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it)
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw ConfigError("unknown key " + where_ + "." + it.key());
    }

private:
    const Json& obj_;
    std::string where_;
    std::vector<std::string> seen_;
};

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
    Json space = Json::array();
    for (const auto& s : c.space) space.push_back({{"name", s.name}, {"cardinality", s.cardinality}});
    Json oracle = {{"kind", c.oracle.kind}, {"tradeoff", c.oracle.tradeoff}, {"path", c.oracle.path}};
    oracle["seed"] = c.oracle.seed ? Json(*c.oracle.seed) : Json(nullptr);
    const auto& e = c.evaluator;
    const auto& g = c.generator;
    return Json{
        {"seed", c.seed},
        {"out_dir", c.out_dir},
        {"enumeration_cap", c.enumeration_cap},
        {"threads", c.threads},
        {"space", space},
        {"oracle", oracle},
        {"records", {{"count", c.records}, {"lo_percentile", c.lo_percentile}, {"hi_percentile", c.hi_percentile}}},
        {"grid", {{"k", c.grid_size}, {"embedding_dim", c.budget_dim}}},
        {"evaluator",
         {{"hidden1", e.hidden1},
          {"hidden2", e.hidden2},
          {"learning_rate", e.learning_rate},
          {"batch_pairs", e.batch_pairs},
          {"max_iters", e.max_iters},
          {"patience", e.patience},
          {"tolerance", e.tolerance},
          {"holdout_fraction", e.holdout_fraction},
          {"log_every", e.log_every},
          {"rule", detail::rule_name(e.rule)}}},
        {"generator",
         {{"hidden", c.generator_shape.hidden},
          {"token_dim", c.generator_shape.token_dim},
          {"learning_rate", g.learning_rate},
          {"traces_per_budget", g.traces_per_budget},
          {"max_steps", g.max_steps},
          {"entropy_weight", g.entropy_weight},
          {"baseline_decay", g.baseline_decay},
          {"use_baseline", g.use_baseline}}},
        {"inference",
         {{"n_infer", c.inference.n_infer},
          {"max_rounds", c.inference.max_rounds},
          {"histogram_bins", c.inference.histogram_bins}}},
        {"compare",
         {{"reward_weight", c.reward_weight}, {"methods", c.compare_methods}, {"samples", c.compare_samples}}},
    };
}

inline void validate(const ExperimentConfig& c) {
    (void)SearchSpace(c.space);
    if (c.records < 2) throw ConfigError("records.count must be >= 2");
    if (c.grid_size < 2) throw ConfigError("grid.k must be >= 2");
    if (c.budget_dim < 1) throw ConfigError("grid.embedding_dim must be >= 1");
    if (c.evaluator.hidden1 < 1 || c.evaluator.hidden2 < 1) throw ConfigError("evaluator widths must be >= 1");
    if (c.generator_shape.hidden < 1 || c.generator_shape.token_dim < 1)
        throw ConfigError("generator widths must be >= 1");
    if (c.generator.traces_per_budget < 1) throw ConfigError("generator.traces_per_budget must be >= 1");
    if (c.inference.n_infer < 1 || c.inference.max_rounds < 1)
        throw ConfigError("inference.n_infer and inference.max_rounds must be >= 1");
    if (!(c.oracle.tradeoff >= 0.0 && c.oracle.tradeoff <= 1.0)) throw ConfigError("oracle.tradeoff must lie in [0,1]");
    if (c.oracle.kind == "tabular" && c.oracle.path.empty()) throw ConfigError("tabular oracle needs oracle.path");
    for (const auto& m : c.compare_methods)
        if (m != "nag" && m != "independent") (void)reward_kind_from_string(m);
}

/// Parses a config, filling unspecified keys with defaults. Unknown keys are errors.
inline ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    detail::Reader top(j, "config");
    top.get("seed", c.seed);
    top.get("out_dir", c.out_dir);
    top.get("enumeration_cap", c.enumeration_cap);
    top.get("threads", c.threads);
    if (const auto* s = top.child("space")) {
        if (!s->is_array()) throw ConfigError("config.space must be a list of {name, cardinality}");
        c.space.clear();
        for (const auto& site : *s) {
            detail::Reader r(site, "config.space[]");
            Site st{"", 0};
            r.get("name", st.name);
            r.get("cardinality", st.cardinality);
            r.finish();
            if (st.name.empty()) st.name = "s" + std::to_string(c.space.size());
            c.space.push_back(st);
        }
    }
    if (const auto* o = top.child("oracle")) {
        detail::Reader r(*o, "config.oracle");
        r.get("kind", c.oracle.kind);
        r.get("tradeoff", c.oracle.tradeoff);
        r.get("path", c.oracle.path);
        if (const auto* seed = r.child("seed"); seed && !seed->is_null()) c.oracle.seed = seed->get<std::uint64_t>();
        r.finish();
        if (c.oracle.kind != "synthetic" && c.oracle.kind != "tabular")
            throw ConfigError("config.oracle.kind must be 'synthetic' or 'tabular'");
    }
    if (const auto* rec = top.child("records")) {
        detail::Reader r(*rec, "config.records");
        r.get("count", c.records);
        r.get("lo_percentile", c.lo_percentile);
        r.get("hi_percentile", c.hi_percentile);
        r.finish();
    }
    if (const auto* g = top.child("grid")) {
        detail::Reader r(*g, "config.grid");
        r.get("k", c.grid_size);
        r.get("embedding_dim", c.budget_dim);
        r.finish();
    }
    if (const auto* ev = top.child("evaluator")) {
        detail::Reader r(*ev, "config.evaluator");
        auto& e = c.evaluator;
        r.get("hidden1", e.hidden1);
        r.get("hidden2", e.hidden2);
        r.get("learning_rate", e.learning_rate);
        r.get("batch_pairs", e.batch_pairs);
        r.get("max_iters", e.max_iters);
        r.get("patience", e.patience);
        r.get("tolerance", e.tolerance);
        r.get("holdout_fraction", e.holdout_fraction);
        r.get("log_every", e.log_every);
        std::string rule = detail::rule_name(e.rule);
        r.get("rule", rule);
        e.rule = detail::rule_from_name(rule);
        r.finish();
    }
    if (const auto* gen = top.child("generator")) {
        detail::Reader r(*gen, "config.generator");
        r.get("hidden", c.generator_shape.hidden);
        r.get("token_dim", c.generator_shape.token_dim);
        r.get("learning_rate", c.generator.learning_rate);
        r.get("traces_per_budget", c.generator.traces_per_budget);
        r.get("max_steps", c.generator.max_steps);
        r.get("entropy_weight", c.generator.entropy_weight);
        r.get("baseline_decay", c.generator.baseline_decay);
        r.get("use_baseline", c.generator.use_baseline);
        r.finish();
    }
    if (const auto* inf = top.child("inference")) {
        detail::Reader r(*inf, "config.inference");
        r.get("n_infer", c.inference.n_infer);
        r.get("max_rounds", c.inference.max_rounds);
        r.get("histogram_bins", c.inference.histogram_bins);
        r.finish();
    }
    if (const auto* cmp = top.child("compare")) {
        detail::Reader r(*cmp, "config.compare");
        r.get("reward_weight", c.reward_weight);
        r.get("methods", c.compare_methods);
        r.get("samples", c.compare_samples);
        r.finish();
    }
    top.finish();
    validate(c);
    return c;
}

inline std::string dump_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// FNV-1a over the canonical config text.
inline std::string config_hash(const ExperimentConfig& c) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : dump_config(c)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace paretogen
