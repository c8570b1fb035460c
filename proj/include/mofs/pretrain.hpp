#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mofs/dft.hpp"
#include "mofs/field.hpp"
#include "mofs/fno.hpp"
#include "mofs/nn.hpp"
#include "mofs/pde_data.hpp"

namespace mofs {

/// Bernoulli(1-rho) keep masks for the a and u fields.
struct MaskPair {
    Tensor m_a; // (H,W), entries in {0,1}
    Tensor m_u;
    double rho = 0.5;
};

/// Masked copies of a normalized (a,u) pair. Deterministic given the seed.
inline std::pair<Field, Field> apply_mask(const Field& a, const Field& u, double rho,
                                          std::uint64_t seed, MaskPair& masks) {
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("apply_mask: rho must be in (0,1)");
    const int h = a.height(), w = a.width();
    masks.rho = rho;
    masks.m_a = Tensor({h, w});
    masks.m_u = Tensor({h, w});
    RandomStream rng(seed);
    Field am = a, um = u;
    for (std::int64_t i = 0; i < masks.m_a.numel(); ++i) {
        masks.m_a[i] = rng.bernoulli(1.0 - rho) ? 1.0 : 0.0;
        am.values[i] *= masks.m_a[i];
    }
    for (std::int64_t i = 0; i < masks.m_u.numel(); ++i) {
        masks.m_u[i] = rng.bernoulli(1.0 - rho) ? 1.0 : 0.0;
        um.values[i] *= masks.m_u[i];
    }
    return {am, um};
}

/// Masked relative L2, squared-norm ratios on both branches:
/// ||(1-M)(x_hat-x)||^2 / (||(1-M) x||^2 + eps), summed for a and u.
inline ad::Var spatial_loss(const ad::Var& a_hat, const ad::Var& u_hat, const Tensor& a,
                            const Tensor& u, const MaskPair& masks, double eps = 1e-8) {
    auto term = [&](const ad::Var& pred, const Tensor& target, const Tensor& keep) {
        Tensor inv_mask(keep.shape());
        for (std::int64_t i = 0; i < keep.numel(); ++i) inv_mask[i] = 1.0 - keep[i];
        ad::Var im = ad::constant(inv_mask);
        ad::Var diff = ad::mul(im, ad::sub(pred, ad::constant(target)));
        ad::Var num = ad::sum_all(ad::square(diff));
        double den = 0.0;
        for (std::int64_t i = 0; i < target.numel(); ++i) {
            const double v = inv_mask[i] * target[i];
            den += v * v;
        }
        return ad::cmul(1.0 / (den + eps), num);
    };
    return ad::add(term(a_hat, a, masks.m_a), term(u_hat, u, masks.m_u));
}

/// Relative (non-squared) Frobenius ratio against |F(a)|; the denominator is
/// guarded by eps = 1e-8 for an identically zero field.
inline ad::Var freq_loss(const ad::Var& f_hat, const Tensor& a, double eps = 1e-8) {
    Tensor target = dft2_magnitude(a);
    ad::Var diff = ad::sub(f_hat, ad::constant(target));
    ad::Var num = ad::frobenius(diff);
    return ad::cmul(1.0 / (target.frobenius_norm() + eps), num);
}

/// Pointwise decoder heads used only during pretraining: spatial psi_a/psi_u
/// and the frequency-magnitude head, all 2d -> 1 per pixel.
class PretrainHeads {
public:
    PretrainHeads() = default;

    PretrainHeads(int d, RandomStream& rng)
        : psi_a_(2 * d, 2 * d, 1, rng), psi_u_(2 * d, 2 * d, 1, rng),
          freq_(2 * d, 2 * d, 1, rng) {}

    /// f: (2d,H,W) concatenated latents -> three (H,W) predictions.
    struct Outputs {
        ad::Var a_hat, u_hat, f_hat;
    };

    Outputs decode(const ad::Var& f) const {
        const int h = f->value.dim(1), w = f->value.dim(2);
        ad::Var tokens = ad::tokens_from_map(f); // (H*W, 2d)
        auto head = [&](const Mlp& m) {
            return ad::reshape(m.fwd(tokens), {h, w});
        };
        return {head(psi_a_), head(psi_u_), head(freq_)};
    }

    void collect(const std::string& prefix, ParamList& out) const {
        psi_a_.collect(prefix + "/psi_a", out);
        psi_u_.collect(prefix + "/psi_u", out);
        freq_.collect(prefix + "/freq", out);
    }

private:
    Mlp psi_a_, psi_u_, freq_;
};

struct PretrainTraceRow {
    int epoch = 0;
    double spatial = 0.0;
    double freq = 0.0;
    double total = 0.0;
};

struct PretrainConfig {
    double rho = 0.5;
    double alpha_freq = 0.5;
    int epochs = 5;
    double lr = 1e-3;
    double clip = 1.0;
    std::uint64_t seed = 0;
};

/// One forward pass of the pretraining pipeline on a normalized (a,u) pair.
struct PretrainStep {
    ad::Var loss, spatial, freq;
};

inline PretrainStep pretrain_forward(const FNOEncoder& enc, const PretrainHeads& heads,
                                     const Field& a_norm, const Field& u_norm, double rho,
                                     double alpha_freq, std::uint64_t mask_seed) {
    MaskPair masks;
    auto [am, um] = apply_mask(a_norm, u_norm, rho, mask_seed, masks);
    ad::Var fa = enc.encode(ad::constant(am.values));
    ad::Var fu = enc.encode(ad::constant(um.values));
    // f = Concat(f_a, f_u) on the channel axis.
    const int d = fa->value.dim(0), h = fa->value.dim(1), w = fa->value.dim(2);
    ad::Var f = ad::reshape(
        ad::concat_rows({ad::reshape(fa, {d, h * w}), ad::reshape(fu, {d, h * w})}),
        {2 * d, h, w});
    auto out = heads.decode(f);
    ad::Var ls = spatial_loss(out.a_hat, out.u_hat, a_norm.values, u_norm.values, masks);
    ad::Var lf = freq_loss(out.f_hat, a_norm.values);
    ad::Var total = ad::add(ls, ad::cmul(alpha_freq, lf));
    return {total, ls, lf};
}

/// One epoch over all (a,u) pairs of all training operators (Gaussian
/// normalization happens here; masking is applied after it). Updates the
/// encoder and all three heads. Aborts on a non-finite loss.
inline PretrainTraceRow pretrain_epoch(const std::vector<OperatorDataset>& datasets,
                                       FNOEncoder& enc, PretrainHeads& heads,
                                       const PretrainConfig& cfg, Adam& opt,
                                       const ParamList& params, int epoch, long total_steps,
                                       long& step_counter) {
    if (datasets.empty()) throw ConfigError("pretrain_epoch: no datasets");
    PretrainTraceRow row;
    row.epoch = epoch;
    int count = 0;
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        const auto& ds = datasets[k];
        for (int j = 0; j < ds.size(); ++j) {
            const Field an = ds.norm_a.apply(ds.samples[static_cast<std::size_t>(j)].first);
            const Field un = ds.norm_u.apply(ds.samples[static_cast<std::size_t>(j)].second);
            const std::uint64_t mask_seed =
                mix_seed(cfg.seed, (static_cast<std::uint64_t>(epoch) << 32) ^
                                       (k << 16) ^ static_cast<std::uint64_t>(j));
            zero_grads(params);
            auto step = pretrain_forward(enc, heads, an, un, cfg.rho, cfg.alpha_freq,
                                         mask_seed);
            const double lv = step.loss->value[0];
            if (!std::isfinite(lv))
                throw NumericalError("pretrain_epoch: non-finite loss at operator '" +
                                     ds.name + "' sample " + std::to_string(j) +
                                     " (spatial=" + std::to_string(step.spatial->value[0]) +
                                     ", freq=" + std::to_string(step.freq->value[0]) + ")");
            ad::backward(step.loss);
            clip_grad_norm(params, cfg.clip);
            opt.step(params, cosine_decay(step_counter++, total_steps));
            row.spatial += step.spatial->value[0];
            row.freq += step.freq->value[0];
            row.total += lv;
            ++count;
        }
    }
    row.spatial /= count;
    row.freq /= count;
    row.total /= count;
    return row;
}

/// Mean pretraining loss on a batch with fixed masks (held-out evaluation).
inline double pretrain_eval_loss(const FNOEncoder& enc, const PretrainHeads& heads,
                                 const std::vector<std::pair<Field, Field>>& batch,
                                 double rho, double alpha_freq, std::uint64_t seed) {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto step = pretrain_forward(enc, heads, batch[i].first, batch[i].second, rho,
                                     alpha_freq, mix_seed(seed, i));
        total += step.loss->value[0];
    }
    return total / static_cast<double>(batch.size());
}

} // namespace mofs
