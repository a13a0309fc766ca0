// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "paretogen/error.hpp"
#include "paretogen/log.hpp"
#include "paretogen/rng.hpp"
#include "paretogen/space.hpp"

namespace paretogen {

/// An architecture with its measured cost and quality (accuracy fraction).
struct ScoredRecord {
    Architecture arch;
    double cost = 1.0;
    double quality = 0.0;

    bool operator==(const ScoredRecord&) const = default;
};

inline void validate_record(const ScoredRecord& r) {
    if (!(r.cost > 0.0) || !std::isfinite(r.cost))
        throw DataError("record " + to_string(r.arch) + " has nonpositive cost");
    if (!(r.quality >= 0.0 && r.quality <= 1.0))
        throw DataError("record " + to_string(r.arch) + " has quality outside [0,1]");
}

/// No architecture satisfies a budget. Carries the cheapest candidate seen, if any.
class InfeasibleBudgetError : public Error {
public:
    InfeasibleBudgetError(double budget, std::optional<ScoredRecord> near_miss, const std::string& context = "")
        : Error(ErrorKind::Infeasible, message(budget, near_miss, context)), budget_(budget),
          near_miss_(std::move(near_miss)) {}

    double budget() const noexcept { return budget_; }
    const std::optional<ScoredRecord>& near_miss() const noexcept { return near_miss_; }

private:
    static std::string message(double budget, const std::optional<ScoredRecord>& nm, const std::string& context) {
        std::string m = "infeasible budget " + std::to_string(budget);
        if (!context.empty()) m += " (" + context + ")";
        if (nm) m += "; best near-miss " + to_string(nm->arch) + " cost " + std::to_string(nm->cost);
        return m;
    }

    double budget_;
    std::optional<ScoredRecord> near_miss_;
};

/// c(arch): either an additive per-site table or an explicit lookup table.
class CostModel {
public:
    CostModel() = default;

    static CostModel additive(std::vector<std::vector<double>> per_site_cost, double base_cost = 0.0) {
        CostModel m;
        m.per_site_ = std::move(per_site_cost);
        m.base_ = base_cost;
        if (base_cost < 0.0) throw ConfigError("base cost must be non-negative");
        for (const auto& row : m.per_site_)
            for (double c : row)
                if (!(c >= 0.0)) throw ConfigError("per-site costs must be non-negative");
        return m;
    }

    static CostModel tabular(std::unordered_map<Architecture, double> table) {
        CostModel m;
        m.table_ = std::move(table);
        m.is_tabular_ = true;
        return m;
    }

    bool is_tabular() const noexcept { return is_tabular_; }
    double base_cost() const noexcept { return base_; }
    const std::vector<std::vector<double>>& per_site_cost() const noexcept { return per_site_; }

    double operator()(const Architecture& arch) const {
        if (is_tabular_) {
            auto it = table_.find(arch);
            if (it == table_.end()) throw DataError("no tabulated cost for " + to_string(arch));
            return it->second;
        }
        if (arch.tokens.size() != per_site_.size())
            throw InvalidArchitectureError("cost model has " + std::to_string(per_site_.size()) + " sites");
        double c = base_;
        for (std::size_t i = 0; i < per_site_.size(); ++i) c += per_site_[i].at(static_cast<std::size_t>(arch.tokens[i]));
        return c;
    }

    /// Smallest and largest attainable cost. Exact for the additive model.
    std::pair<double, double> bounds() const {
        if (is_tabular_) {
            double lo = INFINITY, hi = -INFINITY;
            for (const auto& [a, c] : table_) {
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
            return {lo, hi};
        }
        double lo = base_, hi = base_;
        for (const auto& row : per_site_) {
            lo += *std::min_element(row.begin(), row.end());
            hi += *std::max_element(row.begin(), row.end());
        }
        return {lo, hi};
    }

private:
    std::vector<std::vector<double>> per_site_;
    double base_ = 0.0;
    std::unordered_map<Architecture, double> table_;
    bool is_tabular_ = false;
};

/// Parameters of the seeded synthetic quality landscape.
struct SyntheticLandscape {
    std::vector<std::vector<double>> utility;                   // [site][option]
    std::vector<std::vector<std::vector<double>>> interaction;  // [site][option][next option], site < S-1
    double center = 0.0;
    double scale = 1.0;

    double score(const Architecture& arch) const {
        double z = 0.0;
        const auto n = arch.tokens.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto t = static_cast<std::size_t>(arch.tokens[i]);
            z += utility[i][t];
            if (i + 1 < n) z += interaction[i][t][static_cast<std::size_t>(arch.tokens[i + 1])];
        }
        return z;
    }
};

/// Acc(arch), either looked up from a table or computed from a synthetic landscape.
class QualityOracle {
public:
    QualityOracle() = default;

    static QualityOracle tabular(std::unordered_map<Architecture, double> table) {
        QualityOracle q;
        q.impl_ = std::move(table);
        return q;
    }
    static QualityOracle synthetic(SyntheticLandscape landscape) {
        QualityOracle q;
        q.impl_ = std::move(landscape);
        return q;
    }

    bool is_tabular() const noexcept { return std::holds_alternative<Table>(impl_); }
    const SyntheticLandscape* landscape() const noexcept { return std::get_if<SyntheticLandscape>(&impl_); }

    double operator()(const Architecture& arch) const {
        if (const auto* t = std::get_if<Table>(&impl_)) {
            auto it = t->find(arch);
            if (it == t->end()) throw DataError("no tabulated quality for " + to_string(arch));
            return it->second;
        }
        const auto& land = std::get<SyntheticLandscape>(impl_);
        if (arch.tokens.size() != land.utility.size())
            throw InvalidArchitectureError("landscape has " + std::to_string(land.utility.size()) + " sites");
        const double z = (land.score(arch) - land.center) / land.scale;
        return 1.0 / (1.0 + std::exp(-z));
    }

    /// Architectures listed by a tabular oracle, sorted; empty for synthetic.
    std::vector<Architecture> listed() const {
        std::vector<Architecture> out;
        if (const auto* t = std::get_if<Table>(&impl_)) {
            out.reserve(t->size());
            for (const auto& [a, q] : *t) out.push_back(a);
            std::sort(out.begin(), out.end());
        }
        return out;
    }

    /// True when every architecture of the space can be queried.
    bool covers(const SearchSpace& space) const {
        if (const auto* t = std::get_if<Table>(&impl_))
            return !space.overflowed() && t->size() >= space.total_size();
        return true;
    }

private:
    using Table = std::unordered_map<Architecture, double>;
    std::variant<SyntheticLandscape, Table> impl_;
};

struct CostRange {
    double lo = 0.0;
    double hi = 1.0;
};

/// Draws m architectures (deduplicated while the attempt budget of 10*m
/// lasts) and scores them with the oracles. Deterministic per seed.
inline std::vector<ScoredRecord> collect_records(const SearchSpace& space, const CostModel& cost,
                                                 const QualityOracle& quality, std::size_t m, std::uint64_t seed) {
    if (m < 2) throw ConfigError("collect_records needs m >= 2");
    auto rng = make_rng(seed, {stream::records});
    const auto listed = quality.covers(space) ? std::vector<Architecture>{} : quality.listed();

    auto draw = [&]() -> Architecture {
        if (!listed.empty()) return listed[uniform_index(rng, listed.size())];
        return sample_architecture(space, rng);
    };

    std::vector<ScoredRecord> out;
    out.reserve(m);
    std::unordered_set<Architecture> seen;
    const std::size_t max_attempts = 10 * m;
    std::size_t attempts = 0;
    bool warned = false;
    while (out.size() < m) {
        Architecture a = draw();
        ++attempts;
        if (!seen.insert(a).second) {
            if (attempts <= max_attempts) continue;
            if (!warned) {
                warn("collect_records: retry cap of " + std::to_string(max_attempts) +
                     " draws exhausted; allowing duplicate architectures");
                warned = true;
            }
        }
        ScoredRecord r{a, cost(a), quality(a)};
        validate_record(r);
        out.push_back(std::move(r));
    }
    return out;
}

/// Linear-interpolated empirical percentile of a sorted sample (p in [0,100]).
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(i);
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

inline CostRange estimate_cost_range(const std::vector<ScoredRecord>& records, double lo_pct = 1.0,
                                     double hi_pct = 99.0) {
    if (records.empty()) throw EmptyDatasetError("no records to estimate a cost range from");
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
        throw ConfigError("percentiles must satisfy 0 <= lo < hi <= 100");
    std::vector<double> costs;
    costs.reserve(records.size());
    for (const auto& r : records) costs.push_back(r.cost);
    std::sort(costs.begin(), costs.end());
    CostRange range{percentile_sorted(costs, lo_pct), percentile_sorted(costs, hi_pct)};
    if (!(range.lo < range.hi))
        throw DataError("degenerate cost range: lo = hi = " + std::to_string(range.lo));
    return range;
}

/// Seeded synthetic landscape: costs uniform in [1,10] per option; option
/// utility mixes normalized cost (weight `tradeoff`) with noise; adjacent
/// sites interact with weights scaled by (1 - tradeoff).
inline std::pair<CostModel, QualityOracle> make_synthetic(const SearchSpace& space, std::uint64_t seed,
                                                          double tradeoff) {
    if (!(tradeoff >= 0.0 && tradeoff <= 1.0)) throw ConfigError("tradeoff must lie in [0,1]");
    auto rng = make_rng(seed, {stream::synthetic});
    const auto n = space.num_sites();

    std::vector<std::vector<double>> costs(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int v = 0; v < space.cardinality(i); ++v) costs[i].push_back(uniform(rng, 1.0, 10.0));

    SyntheticLandscape land;
    land.utility.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto [mn, mx] = std::minmax_element(costs[i].begin(), costs[i].end());
        for (double c : costs[i]) {
            const double norm = *mx > *mn ? (c - *mn) / (*mx - *mn) : 0.5;
            land.utility[i].push_back(tradeoff * norm + (1.0 - tradeoff) * uniform01(rng));
        }
    }
    land.interaction.resize(n > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        land.interaction[i].assign(static_cast<std::size_t>(space.cardinality(i)),
                                   std::vector<double>(static_cast<std::size_t>(space.cardinality(i + 1)), 0.0));
        for (auto& row : land.interaction[i])
            for (auto& w : row) w = (1.0 - tradeoff) * uniform(rng, -0.5, 0.5);
    }

    constexpr int kCalibrationSamples = 1024;
    std::vector<double> scores;
    scores.reserve(kCalibrationSamples);
    for (int k = 0; k < kCalibrationSamples; ++k) scores.push_back(land.score(sample_architecture(space, rng)));
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= kCalibrationSamples;
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / kCalibrationSamples);
    land.center = mean;
    land.scale = sd > 1e-12 ? sd : 1.0;

    return {CostModel::additive(std::move(costs), 0.0), QualityOracle::synthetic(std::move(land))};
}

// ---------------------------------------------------------------------------
// Tabular benchmark CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string buf(s);
    char* end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

inline std::optional<long> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string buf(s);
    char* end = nullptr;
    const long v = std::strtol(buf.c_str(), &end, 10);
    if (end != buf.c_str() + buf.size()) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

struct TabularBenchmark {
    SearchSpace space;
    std::vector<ScoredRecord> records;
};

/// Parses a tabular benchmark from a stream. `source` names the input in errors.
///
/// The quality unit is fixed by the first data row: a value above 1 marks the
/// file as percentages (every value is divided by 100, with one warning);
/// otherwise values are fractions and anything outside [0,1] is rejected.
inline TabularBenchmark parse_tabular(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) -> DataError {
        return DataError(source + ":" + std::to_string(lineno) + ": " + msg);
    };

    std::vector<Site> sites;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        for (auto field : detail::split_commas(line)) {
            const auto colon = field.rfind(':');
            if (colon == std::string_view::npos) throw fail("header field '" + std::string(field) + "' is not name:cardinality");
            const auto card = detail::parse_int(detail::trim(field.substr(colon + 1)));
            if (!card || *card < 2) throw fail("bad cardinality in header field '" + std::string(field) + "'");
            sites.push_back({std::string(detail::trim(field.substr(0, colon))), static_cast<int>(*card)});
        }
        break;
    }
    if (sites.empty()) throw EmptyDatasetError(source + ": missing header");
    SearchSpace space(sites);

    TabularBenchmark bench{space, {}};
    std::optional<bool> percent;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto fields = detail::split_commas(line);
        if (fields.size() != sites.size() + 2)
            throw fail("expected " + std::to_string(sites.size() + 2) + " fields, got " + std::to_string(fields.size()));
        ScoredRecord r;
        for (std::size_t i = 0; i < sites.size(); ++i) {
            const auto t = detail::parse_int(fields[i]);
            if (!t) throw fail("token '" + std::string(fields[i]) + "' is not an integer");
            r.arch.tokens.push_back(static_cast<int>(*t));
        }
        const auto cost = detail::parse_double(fields[sites.size()]);
        const auto qual = detail::parse_double(fields[sites.size() + 1]);
        if (!cost) throw fail("cost '" + std::string(fields[sites.size()]) + "' is not a number");
        if (!qual) throw fail("quality '" + std::string(fields[sites.size() + 1]) + "' is not a number");
        const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(lineno) + ")";
        if (!space.contains(r.arch)) throw DataError(source + ": " + where + ": token out of range in " + to_string(r.arch));
        if (!(*cost > 0.0)) throw DataError(source + ": " + where + ": nonpositive cost " + detail::format_double(*cost));
        if (!percent) {
            percent = *qual > 1.0;
            if (*percent) warn(source + ": quality values above 1 read as percentages");
        }
        r.cost = *cost;
        r.quality = *percent ? *qual / 100.0 : *qual;
        if (!(r.quality >= 0.0 && r.quality <= 1.0))
            throw DataError(source + ": " + where + ": quality " + detail::format_double(*qual) + " outside [0,1]");
        bench.records.push_back(std::move(r));
    }
    if (bench.records.empty()) throw EmptyDatasetError(source + ": no data rows");
    return bench;
}

inline TabularBenchmark load_tabular(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tabular benchmark '" + path + "'");
    return parse_tabular(in, path);
}

/// Writes records in the tabular benchmark format (qualities as fractions).
inline void write_tabular(std::ostream& out, const SearchSpace& space, const std::vector<ScoredRecord>& records) {
    for (std::size_t i = 0; i < space.num_sites(); ++i) {
        if (i) out << ',';
        out << space.sites()[i].name << ':' << space.cardinality(i);
    }
    out << '\n';
    for (const auto& r : records) {
        for (int t : r.arch.tokens) out << t << ',';
        out << detail::format_double(r.cost) << ',' << detail::format_double(r.quality) << '\n';
    }
}

/// Oracles backed by a tabular benchmark. Later rows override earlier duplicates.
inline std::pair<CostModel, QualityOracle> tabular_oracles(const TabularBenchmark& bench) {
    std::unordered_map<Architecture, double> costs, quals;
    for (const auto& r : bench.records) {
        costs[r.arch] = r.cost;
        quals[r.arch] = r.quality;
    }
    return {CostModel::tabular(std::move(costs)), QualityOracle::tabular(std::move(quals))};
}

}  // namespace paretogen
