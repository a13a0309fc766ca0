// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "paretogen/budget.hpp"
#include "paretogen/diffcore/layers.hpp"
#include "paretogen/diffcore/optimizer.hpp"
#include "paretogen/oracle.hpp"
#include "paretogen/space.hpp"

namespace paretogen {

// ---------------------------------------------------------------------------
// Pareto dominance comparator
// ---------------------------------------------------------------------------

enum class DominanceRule {
    /// Quality decides when both records fit the budget, cost decides otherwise.
    Full,
    /// Cost decides unconditionally (the rule with the accuracy comparison removed).
    CostOnly,
};

/// +1 if r1 is better than r2 under `budget`, -1 if worse, 0 on an exact tie.
inline int dominance(const ScoredRecord& r1, const ScoredRecord& r2, double budget,
                     DominanceRule rule = DominanceRule::Full) {
    if (rule == DominanceRule::Full && r1.cost <= budget && r2.cost <= budget) {
        if (r1.quality > r2.quality) return 1;
        if (r1.quality < r2.quality) return -1;
        return 0;
    }
    if (r1.cost < r2.cost) return 1;
    if (r1.cost > r2.cost) return -1;
    return 0;
}

/// True when some pair of records is non-tied under `budget`.
inline bool has_untied_pair(std::span<const ScoredRecord> records, double budget, DominanceRule rule) {
    if (records.size() < 2) return false;
    double qmin = INFINITY, qmax = -INFINITY, cmin = INFINITY, cmax = -INFINITY;
    std::size_t infeasible = 0;
    for (const auto& r : records) {
        cmin = std::min(cmin, r.cost);
        cmax = std::max(cmax, r.cost);
        if (rule == DominanceRule::Full && r.cost <= budget) {
            qmin = std::min(qmin, r.quality);
            qmax = std::max(qmax, r.quality);
        } else {
            ++infeasible;
        }
    }
    return qmin < qmax || (infeasible > 0 && cmin < cmax);
}

// ---------------------------------------------------------------------------
// Learned evaluator R(arch | budget)
// ---------------------------------------------------------------------------

struct EvaluatorConfig {
    Eigen::Index hidden1 = 256;
    Eigen::Index hidden2 = 128;
    double learning_rate = 1e-3;
    std::size_t batch_pairs = 256;
    std::size_t max_iters = 5000;
    std::size_t patience = 500;
    double tolerance = 1e-4;
    double holdout_fraction = 0.1;
    std::size_t log_every = 250;
    DominanceRule rule = DominanceRule::Full;
};

/// Scores one-hot(arch) ++ g(budget) with a three-layer dense stack. The budget
/// table is a frozen snapshot of the shared grid taken before training.
class EvaluatorModel {
public:
    EvaluatorModel() = default;

    EvaluatorModel(SearchSpace space, BudgetGrid grid, Eigen::Index hidden1, Eigen::Index hidden2, std::uint64_t seed)
        : space_(std::move(space)), grid_(std::move(grid)) {
        auto rng = make_rng(seed, {stream::evaluator, 0});
        const auto in = static_cast<Eigen::Index>(space_.encoding_width()) + grid_.dim();
        net_ = diffcore::DenseStack(params_, "eval", {in, hidden1, hidden2, 1}, rng);
    }

    /// Rebuilds a model around checkpointed parameters.
    EvaluatorModel(SearchSpace space, BudgetGrid grid, diffcore::ParamStore params)
        : space_(std::move(space)), grid_(std::move(grid)), params_(std::move(params)) {
        net_ = diffcore::DenseStack::bind(params_, "eval", 3);
        if (net_.input_width() != static_cast<Eigen::Index>(space_.encoding_width()) + grid_.dim())
            throw ConfigError("evaluator checkpoint does not match the search space and budget grid");
    }

    EvaluatorModel(const EvaluatorModel& o) : space_(o.space_), grid_(o.grid_), params_(o.params_) { rebind(); }
    EvaluatorModel& operator=(const EvaluatorModel& o) {
        if (this != &o) {
            space_ = o.space_;
            grid_ = o.grid_;
            params_ = o.params_;
            rebind();
        }
        return *this;
    }
    EvaluatorModel(EvaluatorModel&& o) noexcept = default;
    EvaluatorModel& operator=(EvaluatorModel&& o) noexcept = default;

    const SearchSpace& space() const noexcept { return space_; }
    const BudgetGrid& grid() const noexcept { return grid_; }
    diffcore::ParamStore& params() noexcept { return params_; }
    const diffcore::ParamStore& params() const noexcept { return params_; }
    const diffcore::DenseStack& net() const noexcept { return net_; }

    /// Input matrix with one column per (arch, budget vector) pair.
    Matrix inputs(std::span<const Architecture* const> archs, std::span<const Vector* const> budget_vectors) const {
        Matrix x = Matrix::Zero(net_.input_width(), static_cast<Eigen::Index>(archs.size()));
        for (std::size_t c = 0; c < archs.size(); ++c) {
            const auto& a = *archs[c];
            space_.validate(a);
            const auto col = static_cast<Eigen::Index>(c);
            for (std::size_t i = 0; i < space_.num_sites(); ++i)
                x(static_cast<Eigen::Index>(space_.offset(i)) + a.tokens[i], col) = 1.0;
            x.col(col).tail(grid_.dim()) = *budget_vectors[c];
        }
        return x;
    }

    struct Evaluation {
        double value = 0.0;
        bool clamped = false;
    };

    Evaluation evaluate(const Architecture& arch, double budget) const {
        const auto bv = budget_vector(grid_, budget);
        const Architecture* a = &arch;
        const Vector* v = &bv.value;
        return {net_.forward(inputs({&a, 1}, {&v, 1}))(0), bv.clamped};
    }

    /// R for many architectures under one budget.
    std::vector<double> evaluate_batch(std::span<const Architecture> archs, double budget) const {
        const auto bv = budget_vector(grid_, budget);
        std::vector<const Architecture*> ap;
        std::vector<const Vector*> vp(archs.size(), &bv.value);
        for (const auto& a : archs) ap.push_back(&a);
        const RowVector r = net_.forward(inputs(ap, vp));
        return {r.data(), r.data() + r.size()};
    }

private:
    using RowVector = diffcore::RowVector;

    void rebind() { net_ = diffcore::DenseStack::bind(params_, "eval", 3); }

    SearchSpace space_;
    BudgetGrid grid_;
    diffcore::ParamStore params_;
    diffcore::DenseStack net_;
};

/// Ordered, non-tied record pair under one budget.
struct RankedPair {
    std::size_t i = 0;
    std::size_t j = 0;
    double budget = 0.0;
    int verdict = 0;
};

using PairBatch = std::vector<RankedPair>;

namespace detail {

struct PairForward {
    diffcore::DenseStack::Cache cache;
    diffcore::RowVector scores;  // 2n: [R_i ..., R_j ...]
};

inline PairForward forward_pairs(const EvaluatorModel& model, std::span<const ScoredRecord> records,
                                 const PairBatch& batch) {
    const auto n = batch.size();
    std::vector<BudgetVector> bvs;
    bvs.reserve(n);
    std::vector<const Architecture*> archs(2 * n);
    std::vector<const Vector*> vecs(2 * n);
    for (const auto& p : batch) bvs.push_back(budget_vector(model.grid(), p.budget));
    for (std::size_t k = 0; k < n; ++k) {
        archs[k] = &records[batch[k].i].arch;
        archs[n + k] = &records[batch[k].j].arch;
        vecs[k] = vecs[n + k] = &bvs[k].value;
    }
    PairForward f;
    f.scores = model.net().forward(model.inputs(archs, vecs), &f.cache);
    return f;
}

}  // namespace detail

/// Mean over the batch of phi(d * (R_i - R_j)), phi(z) = max(0, 1 - z).
inline double ranking_loss(const EvaluatorModel& model, std::span<const ScoredRecord> records,
                           const PairBatch& batch) {
    if (batch.empty()) throw ConfigError("ranking loss over an empty batch");
    const auto f = detail::forward_pairs(model, records, batch);
    const auto n = batch.size();
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        loss += diffcore::hinge(batch[k].verdict * (f.scores(static_cast<Eigen::Index>(k)) -
                                                    f.scores(static_cast<Eigen::Index>(n + k))));
    return loss / static_cast<double>(n);
}

/// Ranking loss plus gradient accumulation into the model's parameters.
inline double ranking_loss_backward(EvaluatorModel& model, std::span<const ScoredRecord> records,
                                    const PairBatch& batch) {
    if (batch.empty()) throw ConfigError("ranking loss over an empty batch");
    const auto f = detail::forward_pairs(model, records, batch);
    const auto n = batch.size();
    const double inv = 1.0 / static_cast<double>(n);
    diffcore::RowVector d = diffcore::RowVector::Zero(static_cast<Eigen::Index>(2 * n));
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const auto a = static_cast<Eigen::Index>(k), b = static_cast<Eigen::Index>(n + k);
        const double z = batch[k].verdict * (f.scores(a) - f.scores(b));
        loss += diffcore::hinge(z);
        const double g = diffcore::hinge_grad(z) * batch[k].verdict * inv;
        d(a) = g;
        d(b) = -g;
    }
    model.net().backward(f.cache, d);
    return loss * inv;
}

/// Fraction of unordered non-tied pairs (over all given budgets) whose R
/// ordering agrees with the dominance verdict. NaN when no such pair exists.
inline double pair_agreement(const EvaluatorModel& model, std::span<const ScoredRecord> records,
                             std::span<const double> budgets, DominanceRule rule = DominanceRule::Full) {
    std::vector<Architecture> archs;
    archs.reserve(records.size());
    for (const auto& r : records) archs.push_back(r.arch);
    std::size_t agree = 0, total = 0;
    for (double b : budgets) {
        const auto scores = model.evaluate_batch(archs, b);
        for (std::size_t i = 0; i < records.size(); ++i)
            for (std::size_t j = i + 1; j < records.size(); ++j) {
                const int d = dominance(records[i], records[j], b, rule);
                if (d == 0) continue;
                ++total;
                const double diff = scores[i] - scores[j];
                if ((d > 0 && diff > 0.0) || (d < 0 && diff < 0.0)) ++agree;
            }
    }
    return total ? static_cast<double>(agree) / static_cast<double>(total) : std::numeric_limits<double>::quiet_NaN();
}

struct EvaluatorLogEntry {
    std::size_t iteration = 0;
    double loss = 0.0;
    double heldout_agreement = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedEvaluator {
    EvaluatorModel model;
    std::vector<EvaluatorLogEntry> log;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double heldout_agreement = std::numeric_limits<double>::quiet_NaN();
    std::size_t iterations = 0;
    std::vector<ScoredRecord> heldout;
};

/// Samples `count` ordered non-tied pairs, spreading them over `budgets`.
inline PairBatch sample_pairs(std::span<const ScoredRecord> records, std::span<const double> budgets,
                              std::size_t count, DominanceRule rule, Rng& rng) {
    PairBatch batch;
    batch.reserve(count);
    const std::size_t m = records.size();
    constexpr std::size_t kTriesPerPair = 1000;
    for (std::size_t p = 0; p < count; ++p) {
        const double b = budgets[p % budgets.size()];
        for (std::size_t t = 0; t < kTriesPerPair; ++t) {
            const auto i = uniform_index(rng, m);
            auto j = uniform_index(rng, m - 1);
            if (j >= i) ++j;
            const int d = dominance(records[i], records[j], b, rule);
            if (d != 0) {
                batch.push_back({i, j, b, d});
                break;
            }
        }
    }
    return batch;
}

/// Mini-batch descent on the pairwise ranking loss. Each iteration draws K
/// budgets from the grid (with replacement) and a batch of ordered non-tied
/// pairs spread evenly over them.
inline TrainedEvaluator train_evaluator(const SearchSpace& space, std::span<const ScoredRecord> records,
                                        const BudgetGrid& grid, const EvaluatorConfig& cfg, std::uint64_t seed) {
    if (records.size() < 2) throw DataError("evaluator training needs at least 2 records");
    auto rng = make_rng(seed, {stream::evaluator, 1});

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    auto n_hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(records.size())));
    if (n_hold < 2 || records.size() - n_hold < 2) n_hold = 0;

    std::vector<ScoredRecord> train, held;
    for (std::size_t k = 0; k < order.size(); ++k)
        (k < n_hold ? held : train).push_back(records[order[k]]);
    const auto& agreement_set = held.empty() ? train : held;

    std::vector<double> usable;
    for (double b : grid.budgets)
        if (has_untied_pair(train, b, cfg.rule)) usable.push_back(b);
    if (usable.empty()) throw DataError("degenerate dataset: every record pair is tied at every grid budget");

    TrainedEvaluator out{EvaluatorModel(space, grid, cfg.hidden1, cfg.hidden2, seed), {}, 0, 0, NAN, 0, held};
    auto& model = out.model;
    diffcore::Optimizer opt({diffcore::OptimizerKind::Adam, cfg.learning_rate});

    const std::size_t window = std::max<std::size_t>(cfg.patience, 1);
    double window_sum = 0.0;
    double previous_window = INFINITY;
    std::deque<double> recent;
    double recent_sum = 0.0;
    const std::size_t log_every = std::max<std::size_t>(cfg.log_every, 1);
    std::vector<double> sampled(grid.size());

    std::size_t it = 0;
    for (; it < cfg.max_iters; ++it) {
        for (auto& b : sampled) b = usable[uniform_index(rng, usable.size())];
        const auto batch = sample_pairs(train, sampled, std::max<std::size_t>(cfg.batch_pairs, 1), cfg.rule, rng);
        if (batch.empty()) continue;
        const double loss = ranking_loss_backward(model, train, batch);
        opt.step(model.params());
        if (it == 0) out.initial_loss = loss;

        recent.push_back(loss);
        recent_sum += loss;
        if (recent.size() > log_every) {
            recent_sum -= recent.front();
            recent.pop_front();
        }
        out.final_loss = recent_sum / static_cast<double>(recent.size());

        if ((it + 1) % log_every == 0 || it + 1 == cfg.max_iters)
            out.log.push_back({it + 1, out.final_loss, pair_agreement(model, agreement_set, grid.budgets, cfg.rule)});

        window_sum += loss;
        if ((it + 1) % window == 0) {
            const double mean = window_sum / static_cast<double>(window);
            window_sum = 0.0;
            if (previous_window - mean < cfg.tolerance) {
                ++it;
                break;
            }
            previous_window = mean;
        }
    }
    out.iterations = it;
    if (out.log.empty() || out.log.back().iteration != it)
        out.log.push_back({it, out.final_loss, pair_agreement(model, agreement_set, grid.budgets, cfg.rule)});
    out.heldout_agreement = out.log.back().heldout_agreement;
    return out;
}

}  // namespace paretogen
