// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "paretogen/config.hpp"
#include "paretogen/diffcore/param_store.hpp"

namespace paretogen::testing {

/// |a - n| / max(|a|, |n|, floor): relative error that does not blow up on
/// entries that are zero in both.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite differences of `loss` against every entry of `m`.
inline diffcore::Matrix numeric_grad(diffcore::Matrix& m, const std::function<double()>& loss, double h = 1e-5) {
    diffcore::Matrix g(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double keep = m.data()[i];
        m.data()[i] = keep + h;
        const double up = loss();
        m.data()[i] = keep - h;
        const double down = loss();
        m.data()[i] = keep;
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double max_rel_error(const diffcore::Matrix& analytic, const diffcore::Matrix& numeric) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_error(analytic.data()[i], numeric.data()[i]));
    return worst;
}

/// Runs `accumulate` once on zeroed gradients, then checks every parameter of
/// the store by central differences. Returns the worst relative error.
inline double check_store(diffcore::ParamStore& store, const std::function<double()>& loss,
                          const std::function<void()>& accumulate) {
    store.zero_grads();
    accumulate();
    double worst = 0.0;
    for (auto& [name, p] : store) {
        const diffcore::Matrix analytic = p.grad;
        worst = std::max(worst, max_rel_error(analytic, numeric_grad(p.value, loss)));
    }
    return worst;
}

/// A pipeline small enough to train in a second or two.
inline ExperimentConfig tiny_config(std::uint64_t seed = 3) {
    ExperimentConfig c;
    c.seed = seed;
    c.space.clear();
    for (int i = 0; i < 5; ++i) c.space.push_back({"s" + std::to_string(i), 3});
    c.records = 150;
    c.grid_size = 4;
    c.budget_dim = 6;
    c.evaluator.hidden1 = 24;
    c.evaluator.hidden2 = 12;
    c.evaluator.max_iters = 200;
    c.evaluator.batch_pairs = 64;
    c.evaluator.log_every = 50;
    c.generator_shape.hidden = 12;
    c.generator_shape.token_dim = 6;
    c.generator.max_steps = 60;
    c.generator.traces_per_budget = 8;
    c.inference.n_infer = 40;
    c.compare_samples = 200;
    return c;
}

/// Fresh empty directory under the system temp dir, private to this process.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() /
             ("paretogen_test_" + std::to_string(::getpid()) + "_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace paretogen::testing
