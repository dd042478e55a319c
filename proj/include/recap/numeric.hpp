#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "recap/errors.hpp"

namespace recap {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, rows = tokens

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Vec& a, const Vec& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Softmax over the rows flagged active; inactive rows get exactly 0 weight.
// This is the -inf mask from the span-attention formulation, computed stably.
inline Vec masked_softmax(const Vec& logits, const std::vector<bool>& active) {
    Vec out(logits.size(), 0.0);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < logits.size(); ++i)
        if (active[i] && logits[i] > max_logit) max_logit = logits[i];
    if (max_logit == -std::numeric_limits<double>::infinity())
        fail("EmptyNote", "softmax over an empty active range");
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i)
        if (active[i]) z += std::exp(logits[i] - max_logit);
    for (size_t i = 0; i < logits.size(); ++i)
        if (active[i]) out[i] = std::exp(logits[i] - max_logit) / z;
    return out;
}

// ---------------------------------------------------------------------------
// Adam. Parameter blocks register (value, grad) pairs; step() applies the
// update and clears gradients.
// ---------------------------------------------------------------------------

struct ParamBlock {
    std::string name;
    Vec* value = nullptr;
    Vec* grad = nullptr;
};

class AdamOptimizer {
public:
    struct Options {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    explicit AdamOptimizer(std::vector<ParamBlock> params) : AdamOptimizer(std::move(params), Options()) {}

    AdamOptimizer(std::vector<ParamBlock> params, Options opts)
        : params_(std::move(params)), opts_(opts) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }

    void set_lr(double lr) { opts_.lr = lr; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(opts_.beta1, t_);
        const double bc2 = 1.0 - std::pow(opts_.beta2, t_);
        for (size_t b = 0; b < params_.size(); ++b) {
            Vec& value = *params_[b].value;
            Vec& grad = *params_[b].grad;
            for (size_t i = 0; i < value.size(); ++i) {
                m_[b][i] = opts_.beta1 * m_[b][i] + (1.0 - opts_.beta1) * grad[i];
                v_[b][i] = opts_.beta2 * v_[b][i] + (1.0 - opts_.beta2) * grad[i] * grad[i];
                value[i] -= opts_.lr * (m_[b][i] / bc1) / (std::sqrt(v_[b][i] / bc2) + opts_.eps);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& p : params_)
            std::fill(p.grad->begin(), p.grad->end(), 0.0);
    }

private:
    std::vector<ParamBlock> params_;
    Options opts_;
    std::vector<Vec> m_, v_;
    int t_ = 0;
};

// Plain gradient descent, for tests that need a monotone loss curve.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<ParamBlock> params, double lr) : params_(std::move(params)), lr_(lr) {}

    void step() {
        for (auto& p : params_) {
            for (size_t i = 0; i < p.value->size(); ++i) (*p.value)[i] -= lr_ * (*p.grad)[i];
            std::fill(p.grad->begin(), p.grad->end(), 0.0);
        }
    }

private:
    std::vector<ParamBlock> params_;
    double lr_;
};

}  // namespace recap
