// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "paretogen/diffcore/param_store.hpp"

namespace paretogen::diffcore {

// ---------------------------------------------------------------------------
// Categorical helpers
// ---------------------------------------------------------------------------

/// Numerically stable log-softmax of one logit vector.
inline Vector log_softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return logits.array() - lse;
}

/// Column-wise log-softmax.
inline Matrix log_softmax_cols(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double m = logits.col(c).maxCoeff();
        const double lse = m + std::log((logits.col(c).array() - m).exp().sum());
        out.col(c) = logits.col(c).array() - lse;
    }
    return out;
}

/// -sum p log p for a log-distribution; entries at -inf contribute 0.
inline double categorical_entropy(const Vector& log_probs) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < log_probs.size(); ++i) {
        const double p = std::exp(log_probs[i]);
        if (p > 0.0) h -= p * log_probs[i];
    }
    return std::max(h, 0.0);
}

/// d entropy / d logits = -p * (log p + H).
inline Vector entropy_grad_logits(const Vector& log_probs) {
    const double h = categorical_entropy(log_probs);
    Vector g(log_probs.size());
    for (Eigen::Index i = 0; i < log_probs.size(); ++i) {
        const double p = std::exp(log_probs[i]);
        g[i] = p > 0.0 ? -p * (log_probs[i] + h) : 0.0;
    }
    return g;
}

/// Hinge phi(z) = max(0, 1 - z).
inline double hinge(double z) { return std::max(0.0, 1.0 - z); }
/// Subgradient of the hinge; 0 at the kink.
inline double hinge_grad(double z) { return z < 1.0 ? -1.0 : 0.0; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void check_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

// ---------------------------------------------------------------------------
// Affine + leaky ReLU stack
// ---------------------------------------------------------------------------

inline constexpr double kLeakySlope = 0.01;

/// Fully connected layers with leaky-ReLU between them and a scalar output.
/// Parameters live in a ParamStore under "<prefix>.w<i>" / "<prefix>.b<i>".
class DenseStack {
public:
    struct Cache {
        std::vector<Matrix> inputs;  // input to layer l
        std::vector<Matrix> pre;     // pre-activation of layer l
        RowVector output;
    };

    DenseStack() = default;

    /// widths = {input, hidden..., 1}.
    DenseStack(ParamStore& store, const std::string& prefix, std::vector<Eigen::Index> widths, Rng& rng)
        : widths_(std::move(widths)) {
        if (widths_.size() < 2 || widths_.back() != 1) throw ConfigError("dense stack must end in a scalar output");
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            const auto w = prefix + ".w" + std::to_string(l);
            const auto b = prefix + ".b" + std::to_string(l);
            weights_.push_back(&store.add_fan_in(w, widths_[l + 1], widths_[l], widths_[l], rng));
            biases_.push_back(&store.add_fan_in(b, widths_[l + 1], 1, widths_[l], rng));
            names_.push_back(w);
        }
    }

    /// Rebinds to parameters already present in a store (checkpoint load).
    static DenseStack bind(ParamStore& store, const std::string& prefix, std::size_t layers) {
        DenseStack s;
        for (std::size_t l = 0; l < layers; ++l) {
            auto& w = store.at(prefix + ".w" + std::to_string(l));
            auto& b = store.at(prefix + ".b" + std::to_string(l));
            if (l == 0) s.widths_.push_back(w.value.cols());
            s.widths_.push_back(w.value.rows());
            s.weights_.push_back(&w);
            s.biases_.push_back(&b);
            s.names_.push_back(prefix + ".w" + std::to_string(l));
        }
        return s;
    }

    Eigen::Index input_width() const { return widths_.front(); }
    std::size_t num_layers() const { return weights_.size(); }
    const std::vector<Eigen::Index>& widths() const { return widths_; }

    /// Forward on a batch (one column per example). Returns a 1 x n row.
    RowVector forward(const Matrix& x, Cache* cache = nullptr) const {
        if (x.rows() != input_width())
            throw ConfigError("dense stack input has " + std::to_string(x.rows()) + " rows, expected " +
                              std::to_string(input_width()));
        Matrix h = x;
        if (cache) {
            cache->inputs.clear();
            cache->pre.clear();
        }
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Matrix z = weights_[l]->value * h;
            z.colwise() += biases_[l]->value.col(0);
            if (cache) {
                cache->inputs.push_back(std::move(h));
                cache->pre.push_back(z);
            }
            if (l + 1 < weights_.size())
                h = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
            else
                h = std::move(z);
        }
        check_finite(h, names_.back() + " output");
        RowVector out = h.row(0);
        if (cache) cache->output = out;
        return out;
    }

    /// Accumulates gradients given dLoss/dOutput (1 x n). Returns dLoss/dInput.
    Matrix backward(const Cache& cache, const RowVector& d_out, bool want_input_grad = false) const {
        Matrix d = d_out;
        for (std::size_t l = weights_.size(); l-- > 0;) {
            if (l + 1 < weights_.size())
                d = d.cwiseProduct(cache.pre[l].unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; }));
            weights_[l]->grad.noalias() += d * cache.inputs[l].transpose();
            biases_[l]->grad += d.rowwise().sum();
            if (l > 0 || want_input_grad) d = weights_[l]->value.transpose() * d;
        }
        return want_input_grad ? d : Matrix{};
    }

private:
    std::vector<Eigen::Index> widths_;
    std::vector<Parameter*> weights_;
    std::vector<Parameter*> biases_;
    std::vector<std::string> names_;
};

// ---------------------------------------------------------------------------
// LSTM cell with a per-step input and a per-sequence context input
// ---------------------------------------------------------------------------

/// One LSTM layer. Gates are stacked (input, forget, cell, output):
///   z = W_in x_t + W_ctx ctx + W_h h_{t-1} + b
/// Splitting the input weight into step and context blocks is the same as
/// feeding [x_t; ctx] but lets the context term be computed once per sequence.
class RecurrentCell {
public:
    struct StepCache {
        Matrix x, h_prev, c_prev;
        Matrix i, f, g, o, c, tanh_c;
    };

    RecurrentCell() = default;

    RecurrentCell(ParamStore& store, const std::string& prefix, Eigen::Index d_in, Eigen::Index d_ctx,
                  Eigen::Index d_h, Rng& rng)
        : hidden_(d_h) {
        const auto fan_in = d_in + d_ctx + d_h;
        w_in_ = &store.add_fan_in(prefix + ".w_in", 4 * d_h, d_in, fan_in, rng);
        w_ctx_ = &store.add_fan_in(prefix + ".w_ctx", 4 * d_h, d_ctx, fan_in, rng);
        w_h_ = &store.add_fan_in(prefix + ".w_h", 4 * d_h, d_h, fan_in, rng);
        bias_ = &store.add_fan_in(prefix + ".b", 4 * d_h, 1, fan_in, rng);
        bias_->value.block(d_h, 0, d_h, 1).setOnes();  // forget gate
    }

    static RecurrentCell bind(ParamStore& store, const std::string& prefix) {
        RecurrentCell cell;
        cell.w_in_ = &store.at(prefix + ".w_in");
        cell.w_ctx_ = &store.at(prefix + ".w_ctx");
        cell.w_h_ = &store.at(prefix + ".w_h");
        cell.bias_ = &store.at(prefix + ".b");
        cell.hidden_ = cell.w_h_->value.cols();
        return cell;
    }

    Eigen::Index hidden() const { return hidden_; }
    Eigen::Index input_width() const { return w_in_->value.cols(); }
    Eigen::Index context_width() const { return w_ctx_->value.cols(); }

    /// W_ctx ctx + b, shared by every step of the sequences in the batch.
    Matrix context_term(const Matrix& ctx) const {
        Matrix t = w_ctx_->value * ctx;
        t.colwise() += bias_->value.col(0);
        return t;
    }

    /// One step for a batch. Writes h and c; fills cache for backward.
    void forward(const Matrix& x, const Matrix& ctx_term, const Matrix& h_prev, const Matrix& c_prev, Matrix& h,
                 Matrix& c, StepCache& cache) const {
        const auto H = hidden_;
        Matrix z = ctx_term;
        z.noalias() += w_in_->value * x;
        z.noalias() += w_h_->value * h_prev;
        cache.x = x;
        cache.h_prev = h_prev;
        cache.c_prev = c_prev;
        cache.i = z.topRows(H).unaryExpr([](double v) { return sigmoid(v); });
        cache.f = z.middleRows(H, H).unaryExpr([](double v) { return sigmoid(v); });
        cache.g = z.middleRows(2 * H, H).array().tanh();
        cache.o = z.bottomRows(H).unaryExpr([](double v) { return sigmoid(v); });
        cache.c = cache.f.cwiseProduct(c_prev) + cache.i.cwiseProduct(cache.g);
        cache.tanh_c = cache.c.array().tanh();
        c = cache.c;
        h = cache.o.cwiseProduct(cache.tanh_c);
    }

    /// Backward through one step. d_h/d_c are gradients w.r.t. this step's
    /// outputs; on return they hold gradients w.r.t. h_prev/c_prev. Returns the
    /// gate gradient dz so callers can accumulate context and input gradients.
    Matrix backward(const StepCache& k, Matrix& d_h, Matrix& d_c) const {
        const auto H = hidden_;
        const auto n = d_h.cols();
        Matrix dc = d_c.array() + d_h.array() * k.o.array() * (1.0 - k.tanh_c.array().square());
        Matrix dz(4 * H, n);
        dz.topRows(H) = dc.array() * k.g.array() * k.i.array() * (1.0 - k.i.array());
        dz.middleRows(H, H) = dc.array() * k.c_prev.array() * k.f.array() * (1.0 - k.f.array());
        dz.middleRows(2 * H, H) = dc.array() * k.i.array() * (1.0 - k.g.array().square());
        dz.bottomRows(H) = d_h.array() * k.tanh_c.array() * k.o.array() * (1.0 - k.o.array());

        w_in_->grad.noalias() += dz * k.x.transpose();
        w_h_->grad.noalias() += dz * k.h_prev.transpose();
        d_c = dc.cwiseProduct(k.f);
        d_h.noalias() = w_h_->value.transpose() * dz;
        return dz;
    }

    /// Gradient w.r.t. the step input for a gate gradient dz.
    Matrix input_grad(const Matrix& dz) const { return w_in_->value.transpose() * dz; }

    /// Accumulates W_ctx/b gradients from the summed gate gradient; returns d ctx.
    Matrix context_backward(const Matrix& ctx, const Matrix& dz_sum) const {
        w_ctx_->grad.noalias() += dz_sum * ctx.transpose();
        bias_->grad += dz_sum.rowwise().sum();
        return w_ctx_->value.transpose() * dz_sum;
    }

private:
    Parameter* w_in_ = nullptr;
    Parameter* w_ctx_ = nullptr;
    Parameter* w_h_ = nullptr;
    Parameter* bias_ = nullptr;
    Eigen::Index hidden_ = 0;
};

}  // namespace paretogen::diffcore
