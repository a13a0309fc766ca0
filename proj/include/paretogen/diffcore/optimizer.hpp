// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "paretogen/diffcore/param_store.hpp"

namespace paretogen::diffcore {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Descends accumulated gradients (callers accumulate the gradient of a loss
/// to minimize) and zeroes them afterwards.
class Optimizer {
public:
    Optimizer() = default;
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    const OptimizerConfig& config() const noexcept { return cfg_; }
    std::uint64_t steps() const noexcept { return steps_; }

    void step(ParamStore& params) {
        for (auto& [name, p] : params) {
            if (!p.grad.allFinite()) {
                params.zero_grads();
                throw NumericError("non-finite gradient for '" + name + "'; update skipped");
            }
        }
        ++steps_;
        if (cfg_.kind == OptimizerKind::Sgd) {
            for (auto& [name, p] : params) p.value -= cfg_.learning_rate * p.grad;
        } else {
            const double t = static_cast<double>(steps_);
            const double c1 = 1.0 - std::pow(cfg_.beta1, t);
            const double c2 = 1.0 - std::pow(cfg_.beta2, t);
            for (auto& [name, p] : params) {
                auto& [m, v] = moments_[name];
                if (m.size() == 0) {
                    m = Matrix::Zero(p.value.rows(), p.value.cols());
                    v = Matrix::Zero(p.value.rows(), p.value.cols());
                }
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
                p.value.array() -=
                    cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
            }
        }
        params.zero_grads();
    }

private:
    OptimizerConfig cfg_;
    std::uint64_t steps_ = 0;
    std::map<std::string, std::pair<Matrix, Matrix>> moments_;
};

}  // namespace paretogen::diffcore
