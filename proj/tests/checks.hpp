// SPDX-License-Identifier: Apache-2.0
//
// Measurements shared by the unit tests and the acceptance runner. Each
// function builds a small seeded instance and returns the worst error found.
#pragma once

#include <cmath>
#include <vector>

#include "paretogen/diffcore/layers.hpp"
#include "paretogen/evaluator.hpp"
#include "paretogen/frontier.hpp"
#include "paretogen/generator.hpp"
#include "support.hpp"

namespace paretogen::testing {

using diffcore::Matrix;
using diffcore::RowVector;
using diffcore::Vector;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
    return m;
}

/// Three affine layers with leaky ReLU, weighted-sum loss over 12 inputs.
inline double dense_fd_error(std::uint64_t seed) {
    auto rng = make_rng(seed, {100});
    diffcore::ParamStore store;
    diffcore::DenseStack net(store, "d", {5, 7, 4, 1}, rng);
    const Matrix x = random_matrix(5, 12, rng);
    const RowVector w = random_matrix(1, 12, rng);
    return check_store(store, [&] { return net.forward(x).dot(w); }, [&] {
        diffcore::DenseStack::Cache cache;
        net.forward(x, &cache);
        net.backward(cache, w);
    });
}

/// A few LSTM steps over random inputs with a shared context; the loss is a
/// weighted sum of every hidden state.
struct LstmFixture {
    static constexpr Eigen::Index kIn = 3, kCtx = 2, kHidden = 4, kBatch = 2;
    static constexpr std::size_t kSteps = 4;

    diffcore::ParamStore store;
    diffcore::RecurrentCell cell;
    std::vector<Matrix> xs, weights;
    Matrix ctx;

    explicit LstmFixture(std::uint64_t seed) {
        auto rng = make_rng(seed, {101});
        cell = diffcore::RecurrentCell(store, "lstm", kIn, kCtx, kHidden, rng);
        for (auto& [name, p] : store) p.value = random_matrix(p.value.rows(), p.value.cols(), rng, 0.8);
        for (std::size_t t = 0; t < kSteps; ++t) {
            xs.push_back(random_matrix(kIn, kBatch, rng));
            weights.push_back(random_matrix(kHidden, kBatch, rng));
        }
        ctx = random_matrix(kCtx, kBatch, rng);
    }

    double loss() const {
        const Matrix term = cell.context_term(ctx);
        Matrix h = Matrix::Zero(kHidden, kBatch), c = Matrix::Zero(kHidden, kBatch), h2, c2;
        diffcore::RecurrentCell::StepCache cache;
        double total = 0.0;
        for (std::size_t t = 0; t < kSteps; ++t) {
            cell.forward(xs[t], term, h, c, h2, c2, cache);
            h = h2;
            c = c2;
            total += h.cwiseProduct(weights[t]).sum();
        }
        return total;
    }

    /// Accumulates parameter gradients; returns (d inputs per step, d context).
    std::pair<std::vector<Matrix>, Matrix> backward() {
        const Matrix term = cell.context_term(ctx);
        std::vector<diffcore::RecurrentCell::StepCache> caches(kSteps);
        Matrix h = Matrix::Zero(kHidden, kBatch), c = Matrix::Zero(kHidden, kBatch), h2, c2;
        for (std::size_t t = 0; t < kSteps; ++t) {
            cell.forward(xs[t], term, h, c, h2, c2, caches[t]);
            h = h2;
            c = c2;
        }
        Matrix d_h = Matrix::Zero(kHidden, kBatch), d_c = Matrix::Zero(kHidden, kBatch);
        Matrix dz_sum = Matrix::Zero(4 * kHidden, kBatch);
        std::vector<Matrix> d_xs(kSteps);
        for (std::size_t t = kSteps; t-- > 0;) {
            d_h += weights[t];
            const Matrix dz = cell.backward(caches[t], d_h, d_c);
            d_xs[t] = cell.input_grad(dz);
            dz_sum += dz;
        }
        return {d_xs, cell.context_backward(ctx, dz_sum)};
    }
};

inline double lstm_param_fd_error(std::uint64_t seed) {
    LstmFixture f(seed);
    return check_store(f.store, [&] { return f.loss(); }, [&] { f.backward(); });
}

inline double lstm_input_fd_error(std::uint64_t seed) {
    LstmFixture f(seed);
    f.store.zero_grads();
    const auto [d_xs, d_ctx] = f.backward();
    double worst = max_rel_error(d_ctx, numeric_grad(f.ctx, [&] { return f.loss(); }));
    for (std::size_t t = 0; t < LstmFixture::kSteps; ++t)
        worst = std::max(worst, max_rel_error(d_xs[t], numeric_grad(f.xs[t], [&] { return f.loss(); })));
    return worst;
}

inline double log_softmax_fd_error(std::uint64_t seed) {
    auto rng = make_rng(seed, {102});
    Matrix logits = random_matrix(6, 1, rng, 3.0);
    const Vector w = random_matrix(6, 1, rng);
    const Vector p = diffcore::log_softmax(logits.col(0)).array().exp();
    const Matrix analytic = w - p * w.sum();
    return max_rel_error(analytic, numeric_grad(logits, [&] { return diffcore::log_softmax(logits.col(0)).dot(w); }));
}

inline double entropy_fd_error(std::uint64_t seed) {
    auto rng = make_rng(seed, {103});
    Matrix logits = random_matrix(5, 1, rng, 2.0);
    const Matrix analytic = diffcore::entropy_grad_logits(diffcore::log_softmax(logits.col(0)));
    return max_rel_error(analytic, numeric_grad(logits, [&] {
                             return diffcore::categorical_entropy(diffcore::log_softmax(logits.col(0)));
                         }));
}

inline double hinge_fd_error(std::uint64_t seed) {
    auto rng = make_rng(seed, {104});
    double z = uniform(rng, -3.0, 3.0);
    if (std::abs(z - 1.0) < 1e-3) z += 0.01;  // off the kink
    Matrix m = Matrix::Constant(1, 1, z);
    const Matrix numeric = numeric_grad(m, [&] { return diffcore::hinge(m(0, 0)); });
    return rel_error(diffcore::hinge_grad(z), numeric(0, 0));
}

/// Pairwise ranking loss over every non-tied ordered pair of three records at
/// four budgets (two of them off-grid).
inline double ranking_loss_fd_error(std::uint64_t seed) {
    const auto space = SearchSpace::uniform({3, 2, 3});
    auto rng = make_rng(seed, {105});
    std::vector<ScoredRecord> rs;
    for (int i = 0; i < 3; ++i) rs.push_back({sample_architecture(space, rng), uniform(rng, 5.0, 45.0), uniform01(rng)});
    PairBatch batch;
    for (double b : {10.0, 25.0, 33.3, 40.0})
        for (std::size_t i = 0; i < rs.size(); ++i)
            for (std::size_t j = 0; j < rs.size(); ++j)
                if (i != j && dominance(rs[i], rs[j], b) != 0) batch.push_back({i, j, b, dominance(rs[i], rs[j], b)});
    if (batch.empty()) return 0.0;
    EvaluatorModel m(space, build_grid({10.0, 40.0}, 4, 3, seed), 8, 5, seed);
    // keep every pair on the sloped side of the hinge
    m.params().at("eval.w2").value *= 0.1;
    return check_store(m.params(), [&] { return ranking_loss(m, rs, batch); },
                       [&] { ranking_loss_backward(m, rs, batch); });
}

/// The generator objective sum_c a_c log pi(arch_c | b_c) + e_c sum_t H_t(c)
/// for sampled traces at on-grid, off-grid and clamped budgets. Covers the
/// token embedding rows, the start vector, the budget table and the heads.
inline double generator_loss_fd_error(std::uint64_t seed) {
    const auto space = SearchSpace::uniform({3, 2, 4});
    GeneratorModel model(space, build_grid({10.0, 30.0}, 3, 3, seed), {5, 3}, seed);
    auto rng = make_rng(seed, {106});
    const std::vector<double> budgets{10.0, 17.5, 20.0, 26.0, 35.0};
    const auto sampled = model.rollout(budgets, &rng);
    std::vector<Architecture> archs;
    for (std::size_t c = 0; c < budgets.size(); ++c) archs.push_back(sampled.arch(c));
    std::vector<double> a, e;
    for (std::size_t c = 0; c < budgets.size(); ++c) {
        a.push_back(uniform(rng, -1.0, 1.0));
        e.push_back(uniform(rng, -1.0, 1.0));
    }
    auto objective = [&] {
        const auto r = model.rollout(budgets, nullptr, archs);
        double j = 0.0;
        for (std::size_t c = 0; c < budgets.size(); ++c) j += a[c] * r.log_prob(c) + e[c] * r.entropy_sum(c);
        return j;
    };
    return check_store(model.params(), objective, [&] { model.backward(model.rollout(budgets, nullptr, archs), a, e); });
}

/// Relative L2 error between the sampled score-function estimate
///   mean_i R(a_i) grad log pi(a_i) + lambda grad H
/// and the exact gradient of sum_a pi(a) R(a) + lambda H on a one-site space.
inline double estimator_relative_error(std::uint64_t seed, std::size_t samples, double lambda = 0.1) {
    const auto space = SearchSpace::uniform({4});
    auto model = GeneratorModel::unconditioned(space, {6, 3}, seed);
    const std::vector<double> reward{1.0, 0.2, -0.4, 0.5};

    const std::vector<Architecture> all{Architecture{{0}}, Architecture{{1}}, Architecture{{2}}, Architecture{{3}}};
    const std::vector<double> zero_budgets(all.size(), 0.0);
    const auto exact_r = model.rollout(zero_budgets, nullptr, all);
    std::vector<double> ca, ce(all.size(), 0.0);
    for (std::size_t v = 0; v < all.size(); ++v) ca.push_back(std::exp(exact_r.log_prob(v)) * reward[v]);
    ce[0] = lambda;  // the single-site entropy does not depend on the sampled token
    model.params().zero_grads();
    model.backward(exact_r, ca, ce);
    const Vector exact = model.params().flatten_grads();

    auto rng = make_rng(seed, {107});
    const std::vector<double> budgets(samples, 0.0);
    const auto r = model.rollout(budgets, &rng);
    const double inv = 1.0 / static_cast<double>(samples);
    std::vector<double> sa(samples), se(samples, lambda * inv);
    for (std::size_t c = 0; c < samples; ++c) sa[c] = reward[static_cast<std::size_t>(r.tokens[0][c])] * inv;
    model.params().zero_grads();
    model.backward(r, sa, se);
    const Vector estimate = model.params().flatten_grads();
    model.params().zero_grads();
    return (estimate - exact).norm() / exact.norm();
}

/// Random (cost, quality) points on a coarse lattice, so exact ties on one or
/// both coordinates occur.
inline std::vector<FrontPoint> random_points(std::uint64_t seed, std::size_t n) {
    auto rng = make_rng(seed, {108});
    std::vector<FrontPoint> pts;
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back({static_cast<double>(1 + uniform_index(rng, 60)), static_cast<double>(uniform_index(rng, 50)) / 50.0,
                       Architecture{{static_cast<int>(uniform_index(rng, 5)), static_cast<int>(i % 7)}}});
    return pts;
}

/// Quadratic reference: every point no other point dominates, one per
/// coordinate pair (smallest architecture), sorted by cost.
inline ParetoFront pairwise_front(const std::vector<FrontPoint>& pts) {
    ParetoFront f;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool keep = true;
        for (std::size_t j = 0; j < pts.size() && keep; ++j) {
            if (dominates(pts[j], pts[i])) keep = false;
            const bool same = pts[j].cost == pts[i].cost && pts[j].quality == pts[i].quality;
            if (same && (pts[j].arch < pts[i].arch || (pts[j].arch == pts[i].arch && j < i))) keep = false;
        }
        if (keep) f.points.push_back(pts[i]);
    }
    std::sort(f.points.begin(), f.points.end(), [](const auto& a, const auto& b) { return a.cost < b.cost; });
    return f;
}

/// Worst finite-difference error over every layer and loss for one seed.
inline double worst_gradient_error(std::uint64_t seed) {
    return std::max({dense_fd_error(seed), lstm_param_fd_error(seed), lstm_input_fd_error(seed),
                     log_softmax_fd_error(seed), entropy_fd_error(seed), hinge_fd_error(seed),
                     ranking_loss_fd_error(seed), generator_loss_fd_error(seed)});
}

}  // namespace paretogen::testing
