#pragma once

#include <string>
#include <vector>

#include "mofs/dft.hpp"
#include "mofs/errors.hpp"
#include "mofs/nn.hpp"

namespace mofs {

/// Truncated spectral convolution plus a pointwise linear bypass.
///
/// The complex weights act on the nonnegative-frequency corner modes
/// (k1 < m1, k2 < m2); their conjugate-mirror positions carry the conjugated
/// products and self-conjugate modes keep only the real part, so the output
/// of the layer on real input is real by construction.
class SpectralConvLayer {
public:
    SpectralConvLayer() = default;

    SpectralConvLayer(int d_in, int d_out, int m1, int m2, RandomStream& rng)
        : d_in_(d_in), d_out_(d_out), m1_(m1), m2_(m2) {
        if (m1 < 1 || m2 < 1)
            throw ConfigError("SpectralConvLayer: mode counts must be positive");
        const double scale = 1.0 / static_cast<double>(d_in);
        w_re_ = ad::leaf(random_normal({d_in * d_out * m1 * m2}, rng, scale));
        w_im_ = ad::leaf(random_normal({d_in * d_out * m1 * m2}, rng, scale));
        bypass_ = ad::leaf(random_normal({d_in, d_out}, rng,
                                         std::sqrt(2.0 / (d_in + d_out))));
    }

    /// Mode bounds required at application time: m1 <= ceil(H/2),
    /// m2 <= floor(W/2)+1.
    void check_grid(int h, int w) const {
        if (m1_ > (h + 1) / 2 || m2_ > w / 2 + 1)
            throw ConfigError("SpectralConvLayer: modes (" + std::to_string(m1_) + "," +
                              std::to_string(m2_) + ") exceed bounds for grid " +
                              std::to_string(h) + "x" + std::to_string(w));
    }

    /// (d_in,H,W) -> (d_out,H,W).
    ad::Var apply(const ad::Var& x) const {
        const int h = x->value.dim(1), w = x->value.dim(2);
        check_grid(h, w);
        auto spec = ad::dft2(x);
        const int modes = m1_ * m2_;
        ad::Var gre = ad::gather_corner(spec.re, m1_, m2_);
        ad::Var gim = ad::gather_corner(spec.im, m1_, m2_);
        ad::Var yre = ad::sub(ad::mode_contract(w_re_, gre, d_in_, d_out_, modes),
                              ad::mode_contract(w_im_, gim, d_in_, d_out_, modes));
        ad::Var yim = ad::add(ad::mode_contract(w_re_, gim, d_in_, d_out_, modes),
                              ad::mode_contract(w_im_, gre, d_in_, d_out_, modes));
        ad::ComplexMap out_spec{ad::scatter_conj(yre, m1_, m2_, h, w, +1),
                                ad::scatter_conj(yim, m1_, m2_, h, w, -1)};
        ad::Var spatial = ad::idft2_real(out_spec);

        // Pointwise bypass: (d_in,H*W) -> (d_out,H*W).
        ad::Var flat = ad::reshape(x, {d_in_, h * w});
        ad::Var byp = ad::matmul(ad::transpose2(bypass_), flat);
        return ad::add(spatial, ad::reshape(byp, {d_out_, h, w}));
    }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + "/w_re", w_re_});
        out.push_back({prefix + "/w_im", w_im_});
        out.push_back({prefix + "/bypass", bypass_});
    }

    int modes1() const { return m1_; }
    int modes2() const { return m2_; }
    ad::Var weight_re() const { return w_re_; }
    ad::Var weight_im() const { return w_im_; }
    ad::Var bypass() const { return bypass_; }

private:
    int d_in_ = 0, d_out_ = 0, m1_ = 0, m2_ = 0;
    ad::Var w_re_, w_im_, bypass_;
};

/// Shared spectral encoder: pointwise lifting 1 -> d, then B spectral blocks
/// with GELU. Resolution-free: the same parameters run on any grid satisfying
/// the mode bounds.
class FNOEncoder {
public:
    FNOEncoder() = default;

    FNOEncoder(int d, int blocks, int m1, int m2, RandomStream& rng) : d_(d) {
        lift_ = Linear(1, d, true, rng);
        for (int b = 0; b < blocks; ++b) blocks_.emplace_back(d, d, m1, m2, rng);
    }

    /// (H,W) normalized field -> (d,H,W) latent map.
    ad::Var encode(const ad::Var& field) const {
        const int h = field->value.dim(0), w = field->value.dim(1);
        ad::Var x = ad::reshape(field, {1, h, w});
        ad::Var tokens = ad::tokens_from_map(x);         // (H*W, 1)
        ad::Var lifted = lift_.fwd(tokens);              // (H*W, d)
        x = ad::map_from_tokens(lifted, h, w);           // (d,H,W)
        for (const auto& blk : blocks_) x = ad::gelu(blk.apply(x));
        if (!x->value.all_finite())
            throw NumericalError("FNOEncoder: non-finite activation in spectral blocks");
        return x;
    }

    void collect(const std::string& prefix, ParamList& out) const {
        lift_.collect(prefix + "/lift", out);
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            blocks_[b].collect(prefix + "/block" + std::to_string(b), out);
    }

    /// Parameters of the lifting map and all but the final spectral block;
    /// stage-1 training freezes exactly these.
    void collect_frozen_stage1(const std::string& prefix, ParamList& out) const {
        lift_.collect(prefix + "/lift", out);
        for (std::size_t b = 0; b + 1 < blocks_.size(); ++b)
            blocks_[b].collect(prefix + "/block" + std::to_string(b), out);
    }

    int width() const { return d_; }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    const SpectralConvLayer& block(int i) const { return blocks_[static_cast<std::size_t>(i)]; }

private:
    int d_ = 0;
    Linear lift_;
    std::vector<SpectralConvLayer> blocks_;
};

/// Learnable positional encoding tied to a configured grid; other resolutions
/// get a bilinear resize of P.
class PositionalEncoding {
public:
    PositionalEncoding() = default;

    PositionalEncoding(int d, int h, int w, RandomStream& rng) : h_(h), w_(w) {
        p_ = ad::leaf(random_normal({d, h, w}, rng, 0.02));
    }

    /// P as a (H*W, d) token matrix for the requested grid.
    ad::Var tokens_for(int h, int w) const {
        ad::Var map = p_;
        if (h != h_ || w != w_) map = ad::bilinear_resize(p_, h, w);
        return ad::tokens_from_map(map);
    }

    void collect(const std::string& prefix, ParamList& out) const {
        out.push_back({prefix + "/pos_enc", p_});
    }

    ad::Var raw() const { return p_; }

private:
    int h_ = 0, w_ = 0;
    ad::Var p_;
};

} // namespace mofs
