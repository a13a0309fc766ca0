// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "paretogen/evaluator.hpp"
#include "checks.hpp"

using namespace paretogen;

namespace {

ScoredRecord rec(double cost, double quality, std::vector<int> tokens = {0}) {
    return {Architecture{std::move(tokens)}, cost, quality};
}

// Random record with coordinates drawn from a coarse lattice so ties on one
// coordinate happen often enough to matter.
ScoredRecord random_record(Rng& rng) {
    return rec(static_cast<double>(1 + uniform_index(rng, 200)) / 2.0,
               static_cast<double>(uniform_index(rng, 101)) / 100.0);
}

EvaluatorModel small_model(std::uint64_t seed, const SearchSpace& space, Eigen::Index h1 = 8, Eigen::Index h2 = 5) {
    return EvaluatorModel(space, build_grid({10.0, 40.0}, 4, 3, seed), h1, h2, seed);
}

// Rescales the output layer so that R(a) - R(b) equals `gap` under `budget`.
void force_gap(EvaluatorModel& m, const Architecture& a, const Architecture& b, double budget, double gap) {
    const double now = m.evaluate(a, budget).value - m.evaluate(b, budget).value;
    ASSERT_GT(std::abs(now), 1e-6);
    m.params().at("eval.w2").value *= gap / now;
}

}  // namespace

TEST(Dominance, BranchExamples) {
    EXPECT_EQ(dominance(rec(90, 0.75), rec(95, 0.70), 100), +1);
    EXPECT_EQ(dominance(rec(90, 0.70), rec(95, 0.75), 100), -1);
    EXPECT_EQ(dominance(rec(105, 0.80), rec(110, 0.95), 100), +1);
    EXPECT_EQ(dominance(rec(110, 0.95), rec(105, 0.80), 100), -1);
    EXPECT_EQ(dominance(rec(90, 0.7), rec(90, 0.7), 100), 0);
}

TEST(Dominance, MixedFeasibilityUsesCost) {
    EXPECT_EQ(dominance(rec(90, 0.1), rec(120, 0.99), 100), +1);
    EXPECT_EQ(dominance(rec(120, 0.99), rec(90, 0.1), 100), -1);
    EXPECT_EQ(dominance(rec(100, 0.5), rec(100, 0.4), 100), +1);  // the budget itself is feasible
}

TEST(Dominance, TieExtension) {
    EXPECT_EQ(dominance(rec(50, 0.4), rec(80, 0.4), 100), 0);
    EXPECT_EQ(dominance(rec(150, 0.4), rec(150, 0.9), 100), 0);
}

TEST(Dominance, CostOnlyVariantIgnoresQuality) {
    EXPECT_EQ(dominance(rec(90, 0.10), rec(95, 0.99), 100, DominanceRule::CostOnly), +1);
    EXPECT_EQ(dominance(rec(95, 0.99), rec(90, 0.10), 100, DominanceRule::CostOnly), -1);
    EXPECT_EQ(dominance(rec(90, 0.10), rec(90, 0.99), 100, DominanceRule::CostOnly), 0);
}

TEST(Dominance, AntisymmetryOnRandomTriples) {
    auto rng = make_rng(17);
    int checked = 0;
    while (checked < 10000) {
        const auto a = random_record(rng), b = random_record(rng);
        const double budget = static_cast<double>(1 + uniform_index(rng, 200)) / 2.0 + 0.25;
        if (a.cost == b.cost || a.quality == b.quality) continue;
        ASSERT_EQ(dominance(a, b, budget), -dominance(b, a, budget));
        ASSERT_NE(dominance(a, b, budget), 0);
        ++checked;
    }
}

TEST(Dominance, FeasiblePairDependsOnlyOnQuality) {
    auto rng = make_rng(18);
    for (int k = 0; k < 5000; ++k) {
        const double budget = uniform(rng, 1.0, 100.0);
        auto a = rec(uniform(rng, 1e-3, budget), uniform01(rng));
        auto b = rec(uniform(rng, 1e-3, budget), uniform01(rng));
        const int before = dominance(a, b, budget);
        a.cost = uniform(rng, 1e-3, budget);
        b.cost = budget;
        ASSERT_EQ(dominance(a, b, budget), before);
    }
}

TEST(Dominance, InfeasiblePairDependsOnlyOnCost) {
    auto rng = make_rng(19);
    for (int k = 0; k < 5000; ++k) {
        const double budget = uniform(rng, 1.0, 100.0);
        auto a = rec(uniform(rng, budget * 1.001, 200.0), uniform01(rng));
        auto b = rec(uniform(rng, 0.5, 200.0), uniform01(rng));
        if (uniform01(rng) < 0.5) std::swap(a, b);
        const int before = dominance(a, b, budget);
        a.quality = uniform01(rng);
        b.quality = uniform01(rng);
        ASSERT_EQ(dominance(a, b, budget), before);
    }
}

TEST(EvaluatorModel, DeterministicAndFinite) {
    const auto space = SearchSpace::uniform({3, 2, 4});
    const auto m1 = small_model(5, space);
    const auto m2 = small_model(5, space);
    for (const auto& a : enumerate(space)) {
        const double r = m1.evaluate(a, 22.0).value;
        EXPECT_TRUE(std::isfinite(r));
        EXPECT_EQ(r, m1.evaluate(a, 22.0).value);
        EXPECT_EQ(r, m2.evaluate(a, 22.0).value);
    }
}

TEST(EvaluatorModel, BudgetEntersOnlyThroughEmbedding) {
    const auto space = SearchSpace::uniform({3, 2, 4});
    const auto m = small_model(6, space);
    const Architecture a{{2, 1, 3}};
    const auto hi1 = m.evaluate(a, 41.0), hi2 = m.evaluate(a, 90.0), top = m.evaluate(a, 40.0);
    EXPECT_EQ(hi1.value, hi2.value);
    EXPECT_EQ(hi1.value, top.value);
    EXPECT_TRUE(hi1.clamped);
    EXPECT_FALSE(top.clamped);
    EXPECT_NE(m.evaluate(a, 10.0).value, top.value);
    EXPECT_THROW(m.evaluate(Architecture{{3, 0, 0}}, 20.0), InvalidArchitectureError);
}

TEST(EvaluatorModel, BatchMatchesSingle) {
    const auto space = SearchSpace::uniform({3, 3});
    const auto m = small_model(7, space);
    std::vector<Architecture> all;
    for (const auto& a : enumerate(space)) all.push_back(a);
    const auto batch = m.evaluate_batch(all, 27.5);
    for (std::size_t i = 0; i < all.size(); ++i) EXPECT_DOUBLE_EQ(batch[i], m.evaluate(all[i], 27.5).value);
}

TEST(RankingLoss, Examples) {
    const auto space = SearchSpace::uniform({3, 3});
    const std::vector<ScoredRecord> rs{rec(12, 0.9, {0, 1}), rec(15, 0.5, {2, 2})};
    const double b = 20.0;
    ASSERT_EQ(dominance(rs[0], rs[1], b), +1);
    const PairBatch one{{0, 1, b, +1}};
    const PairBatch both{{0, 1, b, +1}, {1, 0, b, -1}};

    auto m = small_model(8, space);
    force_gap(m, rs[0].arch, rs[1].arch, b, 2.0);
    EXPECT_NEAR(ranking_loss(m, rs, one), 0.0, 1e-12);

    m.params().at("eval.w2").value.setZero();
    EXPECT_EQ(ranking_loss(m, rs, one), 1.0);

    auto m2 = small_model(9, space);
    force_gap(m2, rs[0].arch, rs[1].arch, b, 0.4);
    EXPECT_NEAR(ranking_loss(m2, rs, both), 0.6, 1e-12);
    EXPECT_NEAR(ranking_loss(m2, rs, one), 0.6, 1e-12);
    EXPECT_THROW(ranking_loss(m2, rs, PairBatch{}), ConfigError);
}

TEST(RankingLoss, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        EXPECT_LT(paretogen::testing::ranking_loss_fd_error(seed), 1e-4) << "seed " << seed;
}

TEST(SamplePairs, NeverTiedOrSelf) {
    const auto space = SearchSpace::uniform({2, 2});
    const std::vector<ScoredRecord> rs{rec(10, 0.5, {0, 0}), rec(10, 0.5, {0, 1}), rec(20, 0.7, {1, 0}),
                                       rec(30, 0.7, {1, 1})};
    auto rng = make_rng(3);
    const std::vector<double> budgets{15.0, 25.0, 35.0};
    const auto batch = sample_pairs(rs, budgets, 300, DominanceRule::Full, rng);
    EXPECT_EQ(batch.size(), 300u);
    for (const auto& p : batch) {
        EXPECT_NE(p.i, p.j);
        EXPECT_NE(p.verdict, 0);
        EXPECT_EQ(p.verdict, dominance(rs[p.i], rs[p.j], p.budget));
    }
}

TEST(TrainEvaluator, TinySeparableCaseReachesZeroLoss) {
    const auto space = SearchSpace::uniform({2, 2});
    const std::vector<ScoredRecord> rs{rec(5, 0.3, {0, 1}), rec(8, 0.9, {1, 0})};
    const auto grid = build_grid({4.0, 10.0}, 3, 4, 1);
    EvaluatorConfig cfg;
    cfg.max_iters = 200;
    cfg.batch_pairs = 8;
    cfg.tolerance = -1.0;
    const auto t = train_evaluator(space, rs, grid, cfg, 1);
    PairBatch all;
    for (double b : grid.budgets) {
        all.push_back({0, 1, b, dominance(rs[0], rs[1], b)});
        all.push_back({1, 0, b, dominance(rs[1], rs[0], b)});
    }
    EXPECT_EQ(ranking_loss(t.model, rs, all), 0.0);
    EXPECT_LT(t.final_loss, t.initial_loss);
}

TEST(TrainEvaluator, DegenerateDataIsRejected) {
    const auto space = SearchSpace::uniform({2, 2});
    const std::vector<ScoredRecord> same{rec(5, 0.3, {0, 1}), rec(5, 0.3, {1, 0}), rec(5, 0.3, {1, 1})};
    EXPECT_THROW(train_evaluator(space, same, build_grid({4.0, 10.0}, 2, 2, 1), {}, 1), DataError);
    EXPECT_THROW(train_evaluator(space, std::vector<ScoredRecord>{rec(5, 0.3)}, build_grid({4.0, 10.0}, 2, 2, 1), {}, 1),
                 DataError);
}

TEST(TrainEvaluator, LearnsAndIsDeterministic) {
    const auto cfg = paretogen::testing::tiny_config();
    const auto space = cfg.search_space();
    const auto [cost, quality] = make_synthetic(space, 1, 0.8);
    const auto rs = collect_records(space, cost, quality, 300, 2);
    const auto grid = build_grid(estimate_cost_range(rs), 4, 6, 3);
    EvaluatorConfig ec = cfg.evaluator;
    ec.max_iters = 400;
    const auto a = train_evaluator(space, rs, grid, ec, 4);
    const auto b = train_evaluator(space, rs, grid, ec, 4);
    EXPECT_TRUE(a.model.params() == b.model.params());
    EXPECT_LT(a.final_loss, a.initial_loss);
    EXPECT_GE(a.heldout_agreement, 0.8);
    EXPECT_EQ(a.heldout.size(), 30u);
    ASSERT_FALSE(a.log.empty());
    EXPECT_EQ(a.log.back().iteration, a.iterations);
}

TEST(PairAgreement, ConstantScorerAgreesWithNothing) {
    const auto space = SearchSpace::uniform({2, 2});
    auto m = small_model(2, space);
    m.params().at("eval.w2").value.setZero();
    const std::vector<ScoredRecord> rs{rec(12, 0.3, {0, 1}), rec(20, 0.9, {1, 0})};
    EXPECT_EQ(pair_agreement(m, rs, std::vector<double>{25.0}), 0.0);
    EXPECT_TRUE(std::isnan(pair_agreement(m, std::vector<ScoredRecord>{rs[0], rs[0]}, std::vector<double>{25.0})));
}
