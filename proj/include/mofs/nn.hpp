#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mofs/autodiff.hpp"
#include "mofs/rng.hpp"

namespace mofs {

struct Param {
    std::string name;
    ad::Var var;
};

using ParamList = std::vector<Param>;

inline void zero_grads(const ParamList& params) {
    for (const auto& p : params)
        if (p.var->grad.numel() > 0)
            std::fill(p.var->grad.vec().begin(), p.var->grad.vec().end(), 0.0);
}

/// Global-norm gradient clipping; returns the pre-clip norm.
inline double clip_grad_norm(const ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (p.var->grad.numel() == 0) continue;
        for (double g : p.var->grad.vec()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& p : params) {
            if (p.var->grad.numel() == 0) continue;
            for (double& g : p.var->grad.vec()) g *= s;
        }
    }
    return norm;
}

inline Tensor random_normal(std::vector<int> shape, RandomStream& rng, double scale) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
    return t;
}

/// Dense layer, y = x W (+ b). W is stored (in, out).
class Linear {
public:
    Linear() = default;

    Linear(int in, int out, bool bias, RandomStream& rng, double bias_init = 0.0)
        : has_bias_(bias) {
        const double scale = std::sqrt(2.0 / static_cast<double>(in + out));
        w_ = ad::leaf(random_normal({in, out}, rng, scale));
        if (bias) b_ = ad::leaf(Tensor::full({1, out}, bias_init));
    }

    ad::Var fwd(const ad::Var& x) const {
        ad::Var y = ad::matmul(x, w_);
        return has_bias_ ? ad::add_rowvec(y, b_) : y;
    }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + "/w", w_});
        if (has_bias_) out.push_back({prefix + "/b", b_});
    }

    ad::Var weight() const { return w_; }
    ad::Var bias() const { return b_; }
    bool has_bias() const { return has_bias_; }

private:
    ad::Var w_;
    ad::Var b_;
    bool has_bias_ = false;
};

/// One-hidden-layer MLP with GELU.
class Mlp {
public:
    Mlp() = default;

    Mlp(int in, int hidden, int out, RandomStream& rng)
        : l1_(in, hidden, true, rng), l2_(hidden, out, true, rng) {}

    ad::Var fwd(const ad::Var& x) const { return l2_.fwd(ad::gelu(l1_.fwd(x))); }

    void collect(const std::string& prefix, ParamList& out) const {
        l1_.collect(prefix + "/l1", out);
        l2_.collect(prefix + "/l2", out);
    }

private:
    Linear l1_, l2_;
};

/// Adam with optional per-call learning-rate scale (cosine decay lives in the
/// training loops).
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const ParamList& params, double lr_scale = 1.0) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (const auto& p : params) {
            if (p.var->grad.numel() == 0) continue;
            Slot& s = slots_[p.var.get()];
            if (s.m.numel() == 0) {
                s.m = Tensor(p.var->value.shape());
                s.v = Tensor(p.var->value.shape());
            }
            Tensor& x = p.var->value;
            const Tensor& g = p.var->grad;
            const double lr = lr_ * lr_scale;
            for (std::int64_t i = 0; i < x.numel(); ++i) {
                s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
                s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = s.m[i] / bc1;
                const double vhat = s.v[i] / bc2;
                x[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    double base_lr() const { return lr_; }

private:
    struct Slot {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<ad::Node*, Slot> slots_;
};

/// Half-cosine decay from 1 to floor over total steps.
inline double cosine_decay(long step, long total, double floor = 0.05) {
    if (total <= 0) return 1.0;
    const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
    const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
    return floor + (1.0 - floor) * c;
}

} // namespace mofs
