// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>

#include <Eigen/Dense>

#include "paretogen/error.hpp"
#include "paretogen/rng.hpp"

namespace paretogen::diffcore {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// A dense tensor with its same-shape gradient accumulator.
struct Parameter {
    Matrix value;
    Matrix grad;
};

/// Named parameters in deterministic (lexicographic) order.
class ParamStore {
public:
    using Map = std::map<std::string, Parameter>;

    /// Adds a zero-initialized parameter. References stay valid for the
    /// lifetime of the store (node-based map).
    Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        auto [it, inserted] = params_.try_emplace(name);
        if (!inserted) throw ConfigError("duplicate parameter '" + name + "'");
        it->second.value = Matrix::Zero(rows, cols);
        it->second.grad = Matrix::Zero(rows, cols);
        return it->second;
    }

    /// Adds a parameter drawn uniformly from [-bound, bound].
    Parameter& add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
        auto& p = add(name, rows, cols);
        // column-major fill keeps draw order independent of Eigen internals
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) p.value(r, c) = uniform(rng, -bound, bound);
        return p;
    }

    /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Parameter& add_fan_in(const std::string& name, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                          Rng& rng) {
        return add_uniform(name, rows, cols, 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1))),
                           rng);
    }

    Parameter& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return it->second;
    }
    const Parameter& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grads() {
        for (auto& [name, p] : params_) p.grad.setZero();
    }

    std::size_t size() const noexcept { return params_.size(); }
    Eigen::Index num_scalars() const {
        Eigen::Index n = 0;
        for (const auto& [name, p] : params_) n += p.value.size();
        return n;
    }

    Map::iterator begin() { return params_.begin(); }
    Map::iterator end() { return params_.end(); }
    Map::const_iterator begin() const { return params_.begin(); }
    Map::const_iterator end() const { return params_.end(); }

    /// All values (or gradients) concatenated in store order, column-major per tensor.
    Vector flatten_values() const { return flatten(false); }
    Vector flatten_grads() const { return flatten(true); }

    bool operator==(const ParamStore& o) const {
        if (params_.size() != o.params_.size()) return false;
        for (auto a = params_.begin(), b = o.params_.begin(); a != params_.end(); ++a, ++b) {
            if (a->first != b->first) return false;
            if (a->second.value.rows() != b->second.value.rows() || a->second.value.cols() != b->second.value.cols())
                return false;
            if (a->second.value != b->second.value) return false;
        }
        return true;
    }

private:
    Vector flatten(bool grads) const {
        Vector out(num_scalars());
        Eigen::Index off = 0;
        for (const auto& [name, p] : params_) {
            const Matrix& m = grads ? p.grad : p.value;
            out.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
            off += m.size();
        }
        return out;
    }

    Map params_;
};

/// Adds sum(p^2) to the loss; returns its value.
inline double sum_of_squares(Parameter& p, double weight = 1.0) {
    p.grad += 2.0 * weight * p.value;
    return weight * p.value.squaredNorm();
}

}  // namespace paretogen::diffcore
