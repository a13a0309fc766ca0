// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paretogen/evaluator.hpp"
#include "paretogen/generator.hpp"
#include "paretogen/oracle.hpp"
#include "paretogen/space.hpp"

namespace paretogen {

struct FrontPoint {
    double cost = 0.0;
    double quality = 0.0;
    Architecture arch;

    bool operator==(const FrontPoint&) const = default;
};

/// Mutually nondominated points sorted by ascending cost (and therefore
/// strictly ascending quality).
struct ParetoFront {
    std::vector<FrontPoint> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
    bool operator==(const ParetoFront&) const = default;
};

/// True if a is at least as good on both axes and strictly better on one.
inline bool dominates(const FrontPoint& a, const FrontPoint& b) {
    return a.cost <= b.cost && a.quality >= b.quality && (a.cost < b.cost || a.quality > b.quality);
}

/// Maximal nondominated subset. Among points equal on both coordinates the
/// lexicographically smallest architecture is kept.
inline ParetoFront nondominated(std::vector<FrontPoint> points) {
    std::sort(points.begin(), points.end(), [](const FrontPoint& a, const FrontPoint& b) {
        if (a.cost != b.cost) return a.cost < b.cost;
        if (a.quality != b.quality) return a.quality > b.quality;
        return a.arch < b.arch;
    });
    ParetoFront front;
    for (auto& p : points)
        if (front.points.empty() || p.quality > front.points.back().quality) front.points.push_back(std::move(p));
    return front;
}

/// Area dominated by the front inside [cost, ref_cost] x [ref_quality, quality].
inline double hypervolume(const ParetoFront& front, double ref_cost, double ref_quality = 0.0) {
    if (front.empty()) return 0.0;
    for (const auto& p : front.points)
        if (p.cost > ref_cost || p.quality < ref_quality)
            throw ConfigError("hypervolume reference point does not bound the front");
    double hv = 0.0;
    for (std::size_t i = 0; i < front.points.size(); ++i) {
        const double next = i + 1 < front.points.size() ? front.points[i + 1].cost : ref_cost;
        hv += (next - front.points[i].cost) * (front.points[i].quality - ref_quality);
    }
    return hv;
}

inline std::vector<FrontPoint> to_points(std::span<const ScoredRecord> records) {
    std::vector<FrontPoint> pts;
    pts.reserve(records.size());
    for (const auto& r : records) pts.push_back({r.cost, r.quality, r.arch});
    return pts;
}

// ---------------------------------------------------------------------------
// Brute-force ground truth
// ---------------------------------------------------------------------------

/// Exhaustively scored space, kept in enumeration order.
class GroundTruth {
public:
    GroundTruth(const SearchSpace& space, const CostModel& cost, const QualityOracle& quality,
                std::uint64_t cap = kDefaultEnumerationCap)
        : space_(space) {
        const auto e = enumerate(space, cap);
        cost_.reserve(e.size());
        quality_.reserve(e.size());
        for (const auto& a : e) {
            cost_.push_back(cost(a));
            quality_.push_back(quality(a));
        }
        by_cost_.resize(cost_.size());
        for (std::size_t i = 0; i < by_cost_.size(); ++i) by_cost_[i] = i;
        std::stable_sort(by_cost_.begin(), by_cost_.end(), [&](auto a, auto b) { return cost_[a] < cost_[b]; });
    }

    const SearchSpace& space() const noexcept { return space_; }
    std::size_t size() const noexcept { return cost_.size(); }
    double cost(std::size_t i) const { return cost_[i]; }
    double quality(std::size_t i) const { return quality_[i]; }
    double min_cost() const { return cost_[by_cost_.front()]; }
    double max_cost() const { return cost_[by_cost_.back()]; }

    std::size_t feasible_count(double budget) const {
        std::size_t n = 0;
        for (double c : cost_) n += c <= budget;
        return n;
    }

    /// Fraction of feasible architectures with strictly higher quality than q.
    double better_fraction(double budget, double q) const {
        std::size_t feasible = 0, better = 0;
        for (std::size_t i = 0; i < cost_.size(); ++i)
            if (cost_[i] <= budget) {
                ++feasible;
                better += quality_[i] > q;
            }
        return feasible ? static_cast<double>(better) / static_cast<double>(feasible) : 1.0;
    }

    /// Best feasible quality; ties to lower cost then enumeration order.
    ScoredRecord optimum(double budget) const {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < cost_.size(); ++i) {
            if (cost_[i] > budget) continue;
            if (!best || quality_[i] > quality_[*best] || (quality_[i] == quality_[*best] && cost_[i] < cost_[*best]))
                best = i;
        }
        if (!best) {
            const auto cheapest = by_cost_.front();
            throw InfeasibleBudgetError(budget, ScoredRecord{space_.at(cheapest), cost_[cheapest], quality_[cheapest]},
                                        "no architecture in the space fits");
        }
        return {space_.at(*best), cost_[*best], quality_[*best]};
    }

    ParetoFront front() const {
        std::vector<FrontPoint> pts;
        pts.reserve(cost_.size());
        for (std::size_t i = 0; i < cost_.size(); ++i) pts.push_back({cost_[i], quality_[i], space_.at(i)});
        return nondominated(std::move(pts));
    }

    /// Fraction of the space feasible at `budget` (uniform-sampling base rate).
    double feasible_fraction(double budget) const {
        return static_cast<double>(feasible_count(budget)) / static_cast<double>(size());
    }

private:
    SearchSpace space_;
    std::vector<double> cost_;
    std::vector<double> quality_;
    std::vector<std::size_t> by_cost_;
};

inline ScoredRecord brute_force_optimum(const SearchSpace& space, const CostModel& cost, const QualityOracle& quality,
                                        double budget, std::uint64_t cap = kDefaultEnumerationCap) {
    std::optional<ScoredRecord> best;
    std::optional<ScoredRecord> cheapest;
    for (const auto& a : enumerate(space, cap)) {
        const double c = cost(a);
        if (c > budget) {
            if (!cheapest || c < cheapest->cost) cheapest = ScoredRecord{a, c, quality(a)};
            continue;
        }
        const double q = quality(a);
        if (!best || q > best->quality || (q == best->quality && c < best->cost)) best = ScoredRecord{a, c, q};
    }
    if (!best) throw InfeasibleBudgetError(budget, cheapest, "no architecture in the space fits");
    return *best;
}

inline ParetoFront true_front(const SearchSpace& space, const CostModel& cost, const QualityOracle& quality,
                              std::uint64_t cap = kDefaultEnumerationCap) {
    std::vector<FrontPoint> pts;
    for (const auto& a : enumerate(space, cap)) pts.push_back({cost(a), quality(a), a});
    return nondominated(std::move(pts));
}

// ---------------------------------------------------------------------------
// Reward variants
// ---------------------------------------------------------------------------

enum class RewardKind {
    ParetoDominance,       // learned evaluator, full dominance rule
    ParetoDominanceNoAcc,  // learned evaluator trained with the cost-only rule
    MultiObjective,        // q * (c/T)^w
    MultiObjectiveAbsolute,  // q + w * |c/T - 1|
    OracleQuality,         // q if feasible, else -c/T
};

inline std::string to_string(RewardKind k) {
    switch (k) {
    case RewardKind::ParetoDominance: return "pareto_dominance";
    case RewardKind::ParetoDominanceNoAcc: return "pareto_dominance_no_acc";
    case RewardKind::MultiObjective: return "multi_objective";
    case RewardKind::MultiObjectiveAbsolute: return "multi_objective_absolute";
    case RewardKind::OracleQuality: return "oracle_quality";
    }
    return "?";
}

inline RewardKind reward_kind_from_string(const std::string& s) {
    for (auto k : {RewardKind::ParetoDominance, RewardKind::ParetoDominanceNoAcc, RewardKind::MultiObjective,
                   RewardKind::MultiObjectiveAbsolute, RewardKind::OracleQuality})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown reward variant '" + s + "'");
}

inline bool is_learned(RewardKind k) {
    return k == RewardKind::ParetoDominance || k == RewardKind::ParetoDominanceNoAcc;
}

struct RewardSpec {
    RewardKind kind = RewardKind::ParetoDominance;
    double weight = -0.07;
};

/// Scalar reward of a scored architecture under target budget T.
inline double reward_value(const RewardSpec& spec, const ScoredRecord& r, double budget,
                           const EvaluatorModel* evaluator = nullptr) {
    switch (spec.kind) {
    case RewardKind::ParetoDominance:
    case RewardKind::ParetoDominanceNoAcc:
        if (!evaluator) throw ConfigError(to_string(spec.kind) + " reward needs a trained evaluator");
        return evaluator->evaluate(r.arch, budget).value;
    case RewardKind::MultiObjective:
        return r.quality * std::pow(r.cost / budget, spec.weight);
    case RewardKind::MultiObjectiveAbsolute:
        return r.quality + spec.weight * std::abs(r.cost / budget - 1.0);
    case RewardKind::OracleQuality:
        return r.cost <= budget ? r.quality : -r.cost / budget;
    }
    return 0.0;
}

/// Reward function for generator training. Oracle-based variants query the
/// cost model and quality oracle; learned variants query the evaluator.
inline RewardFn make_reward_fn(const RewardSpec& spec, const CostModel& cost, const QualityOracle& quality,
                               const EvaluatorModel* evaluator) {
    if (is_learned(spec.kind)) {
        if (!evaluator) throw ConfigError(to_string(spec.kind) + " reward needs a trained evaluator");
        return evaluator_reward(*evaluator);
    }
    return [spec, &cost, &quality](std::span<const Architecture> archs, double budget) {
        std::vector<double> out;
        out.reserve(archs.size());
        for (const auto& a : archs) out.push_back(reward_value(spec, {a, cost(a), quality(a)}, budget));
        return out;
    };
}

// ---------------------------------------------------------------------------
// Repeated independent search baseline
// ---------------------------------------------------------------------------

struct IndependentSearchResult {
    GeneratorModel model;
    GeneratorHistory history;
    InferenceReport report;
};

/// Trains a fresh unconditioned policy for one budget with the same REINFORCE
/// machinery and returns its best feasible sample (selected as in `infer`).
/// Throws InfeasibleBudgetError when the trained policy never fits the budget.
inline IndependentSearchResult independent_search(const SearchSpace& space, const CostModel& cost,
                                                  const QualityOracle& quality, double budget,
                                                  const RewardFn& reward_fn, const GeneratorShape& shape,
                                                  const GeneratorTrainingConfig& train_cfg,
                                                  const InferenceConfig& infer_cfg, std::uint64_t seed) {
    IndependentSearchResult out{GeneratorModel::unconditioned(space, shape, seed), {}, {}};
    out.history = train_generator(out.model, reward_fn, train_cfg, seed, {budget});
    out.report = infer(out.model, budget, cost, &quality, nullptr, infer_cfg, seed);
    return out;
}

}  // namespace paretogen
