// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "paretogen/diffcore/param_store.hpp"
#include "paretogen/error.hpp"
#include "paretogen/oracle.hpp"
#include "paretogen/rng.hpp"

namespace paretogen {

using diffcore::Matrix;
using diffcore::Vector;

/// K evenly spaced budgets with one embedding column per budget (d_b x K).
struct BudgetGrid {
    std::vector<double> budgets;
    Matrix embeddings;

    std::size_t size() const noexcept { return budgets.size(); }
    Eigen::Index dim() const noexcept { return embeddings.rows(); }
    double lo() const { return budgets.front(); }
    double hi() const { return budgets.back(); }
};

inline std::vector<double> even_budgets(const CostRange& range, std::size_t k) {
    if (k < 2) throw ConfigError("budget grid needs k >= 2");
    if (!(std::isfinite(range.lo) && std::isfinite(range.hi) && range.lo < range.hi))
        throw ConfigError("degenerate cost range for budget grid");
    std::vector<double> b(k);
    const double step = (range.hi - range.lo) / static_cast<double>(k - 1);
    for (std::size_t i = 0; i < k; ++i) b[i] = range.lo + static_cast<double>(i) * step;
    b.back() = range.hi;
    return b;
}

/// Embeddings start uniform in [-1, 1] (an embedding lookup has fan-in 1).
inline BudgetGrid build_grid(const CostRange& range, std::size_t k, Eigen::Index d_b, std::uint64_t seed) {
    if (d_b < 1) throw ConfigError("budget embedding dimension must be >= 1");
    BudgetGrid g;
    g.budgets = even_budgets(range, k);
    auto rng = make_rng(seed, {stream::grid});
    g.embeddings.resize(d_b, static_cast<Eigen::Index>(k));
    for (Eigen::Index c = 0; c < g.embeddings.cols(); ++c)
        for (Eigen::Index r = 0; r < d_b; ++r) g.embeddings(r, c) = uniform(rng, -1.0, 1.0);
    return g;
}

/// Interpolation weights: vector = xi * E[lower] + (1 - xi) * E[upper].
struct BudgetWeights {
    std::size_t lower = 0;
    std::size_t upper = 0;
    double xi = 1.0;
    bool clamped = false;
};

inline BudgetWeights budget_weights(const std::vector<double>& budgets, double b) {
    if (!(b > budgets.front())) return {0, 0, 1.0, b < budgets.front() || std::isnan(b)};
    if (!(b < budgets.back())) return {budgets.size() - 1, budgets.size() - 1, 1.0, b > budgets.back()};
    const auto it = std::upper_bound(budgets.begin(), budgets.end(), b);
    const auto upper = static_cast<std::size_t>(it - budgets.begin());
    const auto lower = upper - 1;
    if (budgets[lower] == b) return {lower, lower, 1.0, false};
    const double xi = (budgets[upper] - b) / (budgets[upper] - budgets[lower]);
    return {lower, upper, xi, false};
}

inline Vector apply_weights(const Matrix& table, const BudgetWeights& w) {
    if (w.lower == w.upper) return table.col(static_cast<Eigen::Index>(w.lower));
    return w.xi * table.col(static_cast<Eigen::Index>(w.lower)) +
           (1.0 - w.xi) * table.col(static_cast<Eigen::Index>(w.upper));
}

struct BudgetVector {
    Vector value;
    bool clamped = false;
};

/// g(b): stored embedding on grid points, linear interpolation between
/// neighbours, clamped (and flagged) outside [lo, hi].
inline BudgetVector budget_vector(const BudgetGrid& grid, double b) {
    const auto w = budget_weights(grid.budgets, b);
    return {apply_weights(grid.embeddings, w), w.clamped};
}

}  // namespace paretogen
