// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "paretogen/budget.hpp"
#include "paretogen/diffcore/layers.hpp"
#include "paretogen/diffcore/optimizer.hpp"
#include "paretogen/evaluator.hpp"
#include "paretogen/oracle.hpp"
#include "paretogen/space.hpp"

namespace paretogen {

struct GeneratorShape {
    Eigen::Index hidden = 64;
    Eigen::Index token_dim = 16;
};

/// A sampled architecture with its path log-probability and per-step entropies.
struct PolicyTrace {
    Architecture arch;
    double log_prob = 0.0;
    std::vector<double> entropies;
    double budget = 0.0;
};

/// Autoregressive LSTM policy pi(arch | budget). Step t consumes the embedding
/// of token t-1 (a learned start vector at t = 0) plus the budget vector, and
/// emits logits over site t's options through a per-site head.
///
/// An unconditioned model has no budget table and a zero-width context.
class GeneratorModel {
public:
    /// Forward state of a batch of sequences, kept for the backward pass.
    struct Rollout {
        std::vector<double> budgets;
        std::vector<BudgetWeights> weights;
        Matrix context;
        Matrix context_term;
        std::vector<diffcore::RecurrentCell::StepCache> steps;
        std::vector<Matrix> log_probs;            // [site] V_i x n
        std::vector<std::vector<int>> tokens;     // [site][column]
        std::vector<std::vector<double>> entropy; // [site][column]

        std::size_t size() const { return budgets.size(); }
        Architecture arch(std::size_t col) const {
            Architecture a;
            a.tokens.reserve(tokens.size());
            for (const auto& site : tokens) a.tokens.push_back(site[col]);
            return a;
        }
        double log_prob(std::size_t col) const {
            double lp = 0.0;
            for (std::size_t t = 0; t < tokens.size(); ++t)
                lp += log_probs[t](tokens[t][col], static_cast<Eigen::Index>(col));
            return lp;
        }
        double entropy_sum(std::size_t col) const {
            double h = 0.0;
            for (const auto& site : entropy) h += site[col];
            return h;
        }
        PolicyTrace trace(std::size_t col) const {
            PolicyTrace tr{arch(col), log_prob(col), {}, budgets[col]};
            for (const auto& site : entropy) tr.entropies.push_back(site[col]);
            return tr;
        }
    };

    GeneratorModel() = default;

    /// Budget-conditioned model; the embedding table starts from the grid's.
    GeneratorModel(SearchSpace space, const BudgetGrid& grid, GeneratorShape shape, std::uint64_t seed)
        : space_(std::move(space)), budgets_(grid.budgets), conditioned_(true) {
        auto rng = make_rng(seed, {stream::generator, 0});
        params_.add("gen.budget_embedding", grid.embeddings.rows(), grid.embeddings.cols()).value = grid.embeddings;
        init(shape, grid.dim(), rng);
    }

    /// Unconditioned model (no budget input), for single-budget search.
    static GeneratorModel unconditioned(SearchSpace space, GeneratorShape shape, std::uint64_t seed) {
        GeneratorModel m;
        m.space_ = std::move(space);
        auto rng = make_rng(seed, {stream::generator, 0});
        m.init(shape, 0, rng);
        return m;
    }

    /// Rebuilds a model around checkpointed parameters.
    GeneratorModel(SearchSpace space, std::vector<double> budgets, diffcore::ParamStore params)
        : space_(std::move(space)), budgets_(std::move(budgets)), params_(std::move(params)) {
        conditioned_ = params_.contains("gen.budget_embedding");
        if (conditioned_ &&
            params_.at("gen.budget_embedding").value.cols() != static_cast<Eigen::Index>(budgets_.size()))
            throw ConfigError("generator checkpoint budget table does not match the budget grid");
        rebind();
    }

    GeneratorModel(const GeneratorModel& o)
        : space_(o.space_), budgets_(o.budgets_), conditioned_(o.conditioned_), params_(o.params_) {
        rebind();
    }
    GeneratorModel& operator=(const GeneratorModel& o) {
        if (this != &o) {
            space_ = o.space_;
            budgets_ = o.budgets_;
            conditioned_ = o.conditioned_;
            params_ = o.params_;
            rebind();
        }
        return *this;
    }
    GeneratorModel(GeneratorModel&&) noexcept = default;
    GeneratorModel& operator=(GeneratorModel&&) noexcept = default;

    const SearchSpace& space() const noexcept { return space_; }
    const std::vector<double>& budgets() const noexcept { return budgets_; }
    bool conditioned() const noexcept { return conditioned_; }
    diffcore::ParamStore& params() noexcept { return params_; }
    const diffcore::ParamStore& params() const noexcept { return params_; }

    /// The budget grid with the current (trained) embedding table.
    BudgetGrid grid() const {
        if (!conditioned_) throw ConfigError("unconditioned generator has no budget grid");
        return {budgets_, table_->value};
    }

    /// Runs the policy on one column per entry of `budgets`. Tokens are drawn
    /// from `rng`, or copied from `teacher` when given.
    Rollout rollout(std::span<const double> budgets, Rng* rng, std::span<const Architecture> teacher = {}) const {
        const auto n = static_cast<Eigen::Index>(budgets.size());
        const auto S = space_.num_sites();
        const auto H = cell_.hidden();
        if (!teacher.empty() && teacher.size() != budgets.size())
            throw ConfigError("teacher batch size mismatch");

        Rollout r;
        r.budgets.assign(budgets.begin(), budgets.end());
        r.context.resize(cell_.context_width(), n);
        if (conditioned_) {
            r.weights.reserve(budgets.size());
            for (Eigen::Index c = 0; c < n; ++c) {
                r.weights.push_back(budget_weights(budgets_, budgets[static_cast<std::size_t>(c)]));
                r.context.col(c) = apply_weights(table_->value, r.weights.back());
            }
        }
        r.context_term = cell_.context_term(r.context);
        r.steps.resize(S);
        r.log_probs.resize(S);
        r.tokens.assign(S, std::vector<int>(budgets.size(), 0));
        r.entropy.assign(S, std::vector<double>(budgets.size(), 0.0));

        Matrix h = Matrix::Zero(H, n), c = Matrix::Zero(H, n);
        Matrix x(start_->value.rows(), n);
        for (std::size_t t = 0; t < S; ++t) {
            if (t == 0) {
                x = start_->value.replicate(1, n);
            } else {
                for (Eigen::Index col = 0; col < n; ++col)
                    x.col(col) = tok_[t - 1]->value.col(r.tokens[t - 1][static_cast<std::size_t>(col)]);
            }
            Matrix h_next, c_next;
            cell_.forward(x, r.context_term, h, c, h_next, c_next, r.steps[t]);
            h = std::move(h_next);
            c = std::move(c_next);

            Matrix logits = head_w_[t]->value * h;
            logits.colwise() += head_b_[t]->value.col(0);
            diffcore::check_finite(logits, "generator logits at site " + std::to_string(t));
            r.log_probs[t] = diffcore::log_softmax_cols(logits);

            const auto V = r.log_probs[t].rows();
            for (Eigen::Index col = 0; col < n; ++col) {
                const auto lp = r.log_probs[t].col(col);
                r.entropy[t][static_cast<std::size_t>(col)] = diffcore::categorical_entropy(lp);
                int token = 0;
                if (!teacher.empty()) {
                    token = teacher[static_cast<std::size_t>(col)].tokens.at(t);
                    if (token < 0 || token >= V) throw InvalidArchitectureError("teacher token out of range");
                } else {
                    const double u = uniform01(*rng);
                    double acc = 0.0;
                    token = static_cast<int>(V - 1);
                    for (Eigen::Index v = 0; v < V; ++v) {
                        acc += std::exp(lp[v]);
                        if (u < acc) {
                            token = static_cast<int>(v);
                            break;
                        }
                    }
                }
                r.tokens[t][static_cast<std::size_t>(col)] = token;
            }
        }
        return r;
    }

    /// Accumulates the gradient of
    ///   sum_c coef_logprob[c] * log pi(arch_c) + coef_entropy[c] * sum_t H_t(c)
    /// into the parameter gradients.
    void backward(const Rollout& r, std::span<const double> coef_logprob, std::span<const double> coef_entropy) {
        const auto n = static_cast<Eigen::Index>(r.size());
        const auto S = space_.num_sites();
        const auto H = cell_.hidden();
        Matrix d_h = Matrix::Zero(H, n), d_c = Matrix::Zero(H, n);
        Matrix dz_sum = Matrix::Zero(4 * H, n);

        for (std::size_t t = S; t-- > 0;) {
            const auto& lp = r.log_probs[t];
            const Matrix p = lp.array().exp();
            Matrix d_logits(lp.rows(), n);
            for (Eigen::Index col = 0; col < n; ++col) {
                const auto c = static_cast<std::size_t>(col);
                const double h_t = r.entropy[t][c];
                d_logits.col(col) = -coef_logprob[c] * p.col(col);
                d_logits(r.tokens[t][c], col) += coef_logprob[c];
                d_logits.col(col).array() -= coef_entropy[c] * p.col(col).array() * (lp.col(col).array() + h_t);
            }
            const auto& step = r.steps[t];
            const Matrix h_out = step.o.cwiseProduct(step.tanh_c);
            head_w_[t]->grad.noalias() += d_logits * h_out.transpose();
            head_b_[t]->grad += d_logits.rowwise().sum();
            d_h.noalias() += head_w_[t]->value.transpose() * d_logits;

            const Matrix dz = cell_.backward(step, d_h, d_c);
            dz_sum += dz;
            const Matrix dx = cell_.input_grad(dz);
            if (t == 0) {
                start_->grad += dx.rowwise().sum();
            } else {
                for (Eigen::Index col = 0; col < n; ++col)
                    tok_[t - 1]->grad.col(r.tokens[t - 1][static_cast<std::size_t>(col)]) += dx.col(col);
            }
        }
        const Matrix d_ctx = cell_.context_backward(r.context, dz_sum);
        if (conditioned_) {
            for (Eigen::Index col = 0; col < n; ++col) {
                const auto& w = r.weights[static_cast<std::size_t>(col)];
                table_->grad.col(static_cast<Eigen::Index>(w.lower)) += w.xi * d_ctx.col(col);
                if (w.upper != w.lower)
                    table_->grad.col(static_cast<Eigen::Index>(w.upper)) += (1.0 - w.xi) * d_ctx.col(col);
            }
        }
    }

private:
    void init(GeneratorShape shape, Eigen::Index d_ctx, Rng& rng) {
        const auto S = space_.num_sites();
        params_.add_uniform("gen.start", shape.token_dim, 1, 1.0, rng);
        for (std::size_t t = 0; t + 1 < S; ++t)
            params_.add_uniform(tok_name(t), shape.token_dim, space_.cardinality(t), 1.0, rng);
        cell_ = diffcore::RecurrentCell(params_, "gen.cell", shape.token_dim, d_ctx, shape.hidden, rng);
        for (std::size_t t = 0; t < S; ++t) {
            params_.add_fan_in(head_name(t) + ".w", space_.cardinality(t), shape.hidden, shape.hidden, rng);
            params_.add_fan_in(head_name(t) + ".b", space_.cardinality(t), 1, shape.hidden, rng);
        }
        rebind();
    }

    void rebind() {
        const auto S = space_.num_sites();
        start_ = &params_.at("gen.start");
        table_ = conditioned_ ? &params_.at("gen.budget_embedding") : nullptr;
        cell_ = diffcore::RecurrentCell::bind(params_, "gen.cell");
        tok_.clear();
        head_w_.clear();
        head_b_.clear();
        for (std::size_t t = 0; t + 1 < S; ++t) tok_.push_back(&params_.at(tok_name(t)));
        for (std::size_t t = 0; t < S; ++t) {
            head_w_.push_back(&params_.at(head_name(t) + ".w"));
            head_b_.push_back(&params_.at(head_name(t) + ".b"));
            if (head_w_.back()->value.rows() != space_.cardinality(t))
                throw ConfigError("generator head " + std::to_string(t) + " does not match the search space");
        }
        if (conditioned_ && table_->value.rows() != cell_.context_width())
            throw ConfigError("budget table width does not match the recurrent cell");
    }

    static std::string tok_name(std::size_t t) { return "gen.tok" + std::to_string(t); }
    static std::string head_name(std::size_t t) { return "gen.head" + std::to_string(t); }

    SearchSpace space_;
    std::vector<double> budgets_;
    bool conditioned_ = false;
    diffcore::ParamStore params_;
    diffcore::RecurrentCell cell_;
    diffcore::Parameter* start_ = nullptr;
    diffcore::Parameter* table_ = nullptr;
    std::vector<diffcore::Parameter*> tok_;
    std::vector<diffcore::Parameter*> head_w_;
    std::vector<diffcore::Parameter*> head_b_;
};

inline std::vector<PolicyTrace> sample_policy(const GeneratorModel& model, double budget, std::uint64_t seed,
                                              std::size_t n) {
    if (n < 1) throw ConfigError("sample_policy needs n >= 1");
    auto rng = make_rng(seed, {stream::inference});
    const std::vector<double> budgets(n, budget);
    const auto r = model.rollout(budgets, &rng);
    std::vector<PolicyTrace> out;
    out.reserve(n);
    for (std::size_t c = 0; c < n; ++c) out.push_back(r.trace(c));
    return out;
}

/// Teacher-forced log pi(arch | budget).
inline std::vector<double> log_prob_of(const GeneratorModel& model, std::span<const Architecture> archs,
                                       double budget) {
    const std::vector<double> budgets(archs.size(), budget);
    const auto r = model.rollout(budgets, nullptr, archs);
    std::vector<double> out;
    for (std::size_t c = 0; c < archs.size(); ++c) out.push_back(r.log_prob(c));
    return out;
}

// ---------------------------------------------------------------------------
// REINFORCE training
// ---------------------------------------------------------------------------

/// Maps a batch of architectures sampled at one budget to scalar rewards.
using RewardFn = std::function<std::vector<double>(std::span<const Architecture>, double budget)>;

inline RewardFn evaluator_reward(const EvaluatorModel& evaluator) {
    return [&evaluator](std::span<const Architecture> archs, double budget) {
        return evaluator.evaluate_batch(archs, budget);
    };
}

struct GeneratorTrainingConfig {
    double learning_rate = 1e-3;
    std::size_t traces_per_budget = 16;
    std::size_t max_steps = 3000;
    double entropy_weight = 0.01;
    double baseline_decay = 0.95;
    bool use_baseline = true;
};

/// Per-budget exponential moving average of observed rewards.
struct RewardBaseline {
    std::vector<double> value;
    std::vector<bool> seen;
    double decay = 0.95;

    explicit RewardBaseline(std::size_t budgets = 0, double d = 0.95) : value(budgets, 0.0), seen(budgets, false), decay(d) {}

    double get(std::size_t k, double fallback) const { return seen[k] ? value[k] : fallback; }
    void update(std::size_t k, double mean_reward) {
        value[k] = seen[k] ? decay * value[k] + (1.0 - decay) * mean_reward : mean_reward;
        seen[k] = true;
    }
};

struct StepReport {
    std::size_t step = 0;
    std::vector<double> mean_reward;   // per budget
    std::vector<double> mean_entropy;  // per budget, mean per-site entropy
};

/// One REINFORCE ascent step over all budgets: N traces per budget, advantage
/// = reward - per-budget baseline, entropy bonus lambda * sum_t H_t.
class GeneratorTrainer {
public:
    GeneratorTrainer(GeneratorModel& model, std::vector<double> budgets, GeneratorTrainingConfig cfg,
                     std::uint64_t seed)
        : model_(&model), budgets_(std::move(budgets)), cfg_(cfg),
          opt_({diffcore::OptimizerKind::Adam, cfg.learning_rate}), baseline_(budgets_.size(), cfg.baseline_decay),
          rng_(make_rng(seed, {stream::generator, 1})) {
        if (budgets_.empty()) throw ConfigError("generator training needs at least one budget");
        if (cfg_.traces_per_budget < 1) throw ConfigError("traces_per_budget must be >= 1");
    }

    /// Budgets default to the model's grid.
    GeneratorTrainer(GeneratorModel& model, GeneratorTrainingConfig cfg, std::uint64_t seed)
        : GeneratorTrainer(model, model.budgets(), cfg, seed) {}

    const RewardBaseline& baseline() const noexcept { return baseline_; }

    StepReport step(const RewardFn& reward_fn) {
        const auto K = budgets_.size();
        const auto N = cfg_.traces_per_budget;
        std::vector<double> cols;
        cols.reserve(K * N);
        for (double b : budgets_) cols.insert(cols.end(), N, b);
        const auto r = model_->rollout(cols, &rng_);

        StepReport rep{steps_, std::vector<double>(K), std::vector<double>(K)};
        std::vector<double> coef_lp(K * N), coef_ent(K * N, -cfg_.entropy_weight / static_cast<double>(K * N));
        const double S = static_cast<double>(model_->space().num_sites());
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<Architecture> archs;
            archs.reserve(N);
            for (std::size_t i = 0; i < N; ++i) archs.push_back(r.arch(k * N + i));
            const auto rewards = reward_fn(archs, budgets_[k]);
            if (rewards.size() != N) throw ConfigError("reward function returned the wrong number of rewards");
            double mean = 0.0;
            for (double v : rewards) {
                if (!std::isfinite(v)) throw NumericError("non-finite reward at budget " + std::to_string(budgets_[k]));
                mean += v;
            }
            mean /= static_cast<double>(N);
            const double base = cfg_.use_baseline ? baseline_.get(k, mean) : 0.0;
            for (std::size_t i = 0; i < N; ++i)
                coef_lp[k * N + i] = -(rewards[i] - base) / static_cast<double>(K * N);
            rep.mean_reward[k] = mean;
            double ent = 0.0;
            for (std::size_t i = 0; i < N; ++i) ent += r.entropy_sum(k * N + i) / S;
            rep.mean_entropy[k] = ent / static_cast<double>(N);
        }
        model_->backward(r, coef_lp, coef_ent);
        opt_.step(model_->params());
        for (std::size_t k = 0; k < K; ++k) baseline_.update(k, rep.mean_reward[k]);
        ++steps_;
        return rep;
    }

private:
    GeneratorModel* model_;
    std::vector<double> budgets_;
    GeneratorTrainingConfig cfg_;
    diffcore::Optimizer opt_;
    RewardBaseline baseline_;
    Rng rng_;
    std::size_t steps_ = 0;
};

struct GeneratorHistory {
    std::vector<double> budgets;
    std::vector<StepReport> steps;
};

inline GeneratorHistory train_generator(GeneratorModel& model, const RewardFn& reward_fn,
                                        const GeneratorTrainingConfig& cfg, std::uint64_t seed,
                                        std::vector<double> budgets = {}) {
    if (budgets.empty()) budgets = model.budgets();
    GeneratorTrainer trainer(model, budgets, cfg, seed);
    GeneratorHistory h{budgets, {}};
    h.steps.reserve(cfg.max_steps);
    for (std::size_t s = 0; s < cfg.max_steps; ++s) h.steps.push_back(trainer.step(reward_fn));
    return h;
}

inline GeneratorHistory train_generator(GeneratorModel& model, const EvaluatorModel& evaluator,
                                        const GeneratorTrainingConfig& cfg, std::uint64_t seed) {
    return train_generator(model, evaluator_reward(evaluator), cfg, seed);
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;
};

inline Histogram make_histogram(std::span<const double> values, std::size_t bins) {
    Histogram h;
    if (values.empty() || bins == 0) return h;
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        if (b >= bins) b = bins - 1;
        ++h.counts[b];
    }
    return h;
}

struct InferenceConfig {
    std::size_t n_infer = 100;
    std::size_t max_rounds = 20;
    std::size_t histogram_bins = 20;
};

struct InferenceReport {
    double budget = 0.0;
    ScoredRecord chosen;
    bool quality_known = false;  // false when selection fell back to the evaluator
    double score = 0.0;          // selection score
    bool clamped = false;
    std::size_t rounds = 0;
    std::size_t sampled = 0;
    std::size_t feasible = 0;
    double feasibility_rate = 0.0;    // over all sampled candidates
    double first_round_feasibility = 0.0;
    std::vector<double> candidate_costs;
    Histogram histogram;
};

/// Samples candidates at `budget` until some satisfy c <= budget (at most
/// max_rounds batches), then returns the feasible candidate with the highest
/// oracle quality, or highest evaluator score when no oracle is given. Ties go
/// to lower cost, then lexicographically smaller tokens.
inline InferenceReport infer(const GeneratorModel& model, double budget, const CostModel& cost,
                             const QualityOracle* oracle, const EvaluatorModel* evaluator,
                             const InferenceConfig& cfg, std::uint64_t seed) {
    if (!oracle && !evaluator) throw ConfigError("inference needs an oracle or an evaluator to rank candidates");
    if (cfg.n_infer < 1 || cfg.max_rounds < 1) throw ConfigError("n_infer and max_rounds must be >= 1");
    auto rng = make_rng(seed, {stream::inference});
    InferenceReport rep;
    rep.budget = budget;
    rep.clamped = model.conditioned() && budget_weights(model.budgets(), budget).clamped;

    std::optional<ScoredRecord> near_miss;
    std::vector<Architecture> feasible;
    const std::vector<double> budgets(cfg.n_infer, budget);
    for (std::size_t round = 0; round < cfg.max_rounds && feasible.empty(); ++round) {
        const auto r = model.rollout(budgets, &rng);
        ++rep.rounds;
        std::size_t ok = 0;
        for (std::size_t c = 0; c < cfg.n_infer; ++c) {
            auto a = r.arch(c);
            const double cst = cost(a);
            rep.candidate_costs.push_back(cst);
            ++rep.sampled;
            if (cst <= budget) {
                ++ok;
                feasible.push_back(std::move(a));
            } else if (!near_miss || cst < near_miss->cost) {
                near_miss = ScoredRecord{std::move(a), cst, 0.0};
            }
        }
        if (round == 0) rep.first_round_feasibility = static_cast<double>(ok) / static_cast<double>(cfg.n_infer);
    }
    rep.feasible = feasible.size();
    rep.feasibility_rate = static_cast<double>(rep.feasible) / static_cast<double>(rep.sampled);
    rep.histogram = make_histogram(rep.candidate_costs, cfg.histogram_bins);
    if (feasible.empty()) {
        if (near_miss && oracle) near_miss->quality = (*oracle)(near_miss->arch);
        throw InfeasibleBudgetError(budget, near_miss, std::to_string(rep.sampled) + " samples");
    }

    std::vector<double> scores;
    if (oracle) {
        for (const auto& a : feasible) scores.push_back((*oracle)(a));
    } else {
        scores = evaluator->evaluate_batch(feasible, budget);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < feasible.size(); ++i) {
        const double ci = cost(feasible[i]), cb = cost(feasible[best]);
        if (scores[i] > scores[best] || (scores[i] == scores[best] && (ci < cb || (ci == cb && feasible[i] < feasible[best]))))
            best = i;
    }
    rep.score = scores[best];
    rep.chosen.arch = feasible[best];
    rep.chosen.cost = cost(feasible[best]);
    rep.quality_known = oracle != nullptr;
    rep.chosen.quality = oracle ? scores[best] : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

}  // namespace paretogen
