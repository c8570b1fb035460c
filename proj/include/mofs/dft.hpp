#pragma once

#include <complex>
#include <map>
#include <utility>

#include <Eigen/Dense>

#include "mofs/autodiff.hpp"
#include "mofs/tensor.hpp"

namespace mofs {

// Repo-wide DFT convention: unnormalized forward, 1/(HW) on the inverse.

namespace detail {

struct TwiddleTables {
    ad::Mat cos_m; // C[j,k] = cos(2*pi*j*k/n)
    ad::Mat sin_m; // S[j,k] = sin(2*pi*j*k/n)
};

inline const TwiddleTables& twiddles(int n) {
    static std::map<int, TwiddleTables> cache;
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    TwiddleTables t;
    t.cos_m.resize(n, n);
    t.sin_m.resize(n, n);
    const double base = 2.0 * 3.14159265358979323846 / n;
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            // Reduce j*k mod n first so large grids keep full accuracy.
            const long long r = (static_cast<long long>(j) * k) % n;
            t.cos_m(j, k) = std::cos(base * static_cast<double>(r));
            t.sin_m(j, k) = std::sin(base * static_cast<double>(r));
        }
    return cache.emplace(n, std::move(t)).first->second;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Plain (non-autodiff) transforms for data generation and test oracles
// ---------------------------------------------------------------------------

using CMat = Eigen::MatrixXcd;

/// Forward 2D DFT of a complex H x W matrix.
inline CMat dft2(const CMat& x) {
    const int h = static_cast<int>(x.rows()), w = static_cast<int>(x.cols());
    const auto& th = detail::twiddles(h);
    const auto& tw = detail::twiddles(w);
    const CMat wh = th.cos_m - std::complex<double>(0, 1) * th.sin_m;
    const CMat ww = tw.cos_m - std::complex<double>(0, 1) * tw.sin_m;
    return wh * x * ww.transpose();
}

/// Inverse 2D DFT (applies the 1/(HW) factor).
inline CMat idft2(const CMat& x) {
    const int h = static_cast<int>(x.rows()), w = static_cast<int>(x.cols());
    const auto& th = detail::twiddles(h);
    const auto& tw = detail::twiddles(w);
    const CMat wh = th.cos_m + std::complex<double>(0, 1) * th.sin_m;
    const CMat ww = tw.cos_m + std::complex<double>(0, 1) * tw.sin_m;
    return (wh * x * ww.transpose()) / static_cast<double>(h * w);
}

inline CMat dft2_real(const Tensor& field) {
    const int h = field.dim(0), w = field.dim(1);
    CMat x(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) x(i, j) = field.at(i, j);
    return dft2(x);
}

/// Elementwise magnitude of the forward transform, |F(a)|, as an H x W tensor.
inline Tensor dft2_magnitude(const Tensor& field) {
    const CMat f = dft2_real(field);
    Tensor out({field.dim(0), field.dim(1)});
    for (int i = 0; i < field.dim(0); ++i)
        for (int j = 0; j < field.dim(1); ++j) out.at(i, j) = std::abs(f(i, j));
    return out;
}

// ---------------------------------------------------------------------------
// Autodiff transforms on (C,H,W) channel maps
// ---------------------------------------------------------------------------

namespace ad {

struct ComplexMap {
    Var re;
    Var im;
};

/// Forward 2D DFT of a real (C,H,W) map.
inline ComplexMap dft2(const Var& x) {
    const int h = x->value.dim(1), w = x->value.dim(2);
    const auto& th = detail::twiddles(h);
    const auto& tw = detail::twiddles(w);
    // (C_H - i S_H) X (C_W - i S_W)^T with real X.
    Var ar = channel_lmul(th.cos_m, x);
    Var ai = cmul(-1.0, channel_lmul(th.sin_m, x));
    Var re = add(channel_rmul_t(ar, tw.cos_m), channel_rmul_t(ai, tw.sin_m));
    Var im = sub(channel_rmul_t(ai, tw.cos_m), channel_rmul_t(ar, tw.sin_m));
    return {re, im};
}

/// Real part of the inverse 2D DFT of a (C,H,W) complex spectrum.
inline Var idft2_real(const ComplexMap& s) {
    const int h = s.re->value.dim(1), w = s.re->value.dim(2);
    const auto& th = detail::twiddles(h);
    const auto& tw = detail::twiddles(w);
    // (1/HW) (C_H + i S_H)(Sr + i Si)(C_W + i S_W)^T, keep the real part.
    Var ar = sub(channel_lmul(th.cos_m, s.re), channel_lmul(th.sin_m, s.im));
    Var ai = add(channel_lmul(th.cos_m, s.im), channel_lmul(th.sin_m, s.re));
    Var re = sub(channel_rmul_t(ar, tw.cos_m), channel_rmul_t(ai, tw.sin_m));
    return cmul(1.0 / static_cast<double>(h * w), re);
}

/// Imaginary part of the inverse transform (used by realness tests).
inline Var idft2_imag(const ComplexMap& s) {
    const int h = s.re->value.dim(1), w = s.re->value.dim(2);
    const auto& th = detail::twiddles(h);
    const auto& tw = detail::twiddles(w);
    Var ar = sub(channel_lmul(th.cos_m, s.re), channel_lmul(th.sin_m, s.im));
    Var ai = add(channel_lmul(th.cos_m, s.im), channel_lmul(th.sin_m, s.re));
    Var im = add(channel_rmul_t(ai, tw.cos_m), channel_rmul_t(ar, tw.sin_m));
    return cmul(1.0 / static_cast<double>(h * w), im);
}

/// |F(x)| elementwise for a real (C,H,W) map, differentiable.
inline Var dft2_magnitude(const Var& x, double eps = 1e-12) {
    ComplexMap f = dft2(x);
    return sqrt_(cadd(add(square(f.re), square(f.im)), eps));
}

} // namespace ad

} // namespace mofs
