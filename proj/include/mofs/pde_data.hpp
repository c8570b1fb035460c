#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "mofs/dft.hpp"
#include "mofs/errors.hpp"
#include "mofs/field.hpp"
#include "mofs/rng.hpp"

namespace mofs {

// ---------------------------------------------------------------------------
// Gaussian random fields
// ---------------------------------------------------------------------------

/// Smoothed Gaussian random field: white noise low-passed in Fourier space
/// with a Gaussian filter of wavenumber scale k0; output is exactly real and
/// standardized to zero mean / unit std.
inline Field gaussian_random_field(int h, int w, std::uint64_t seed, double k0 = 3.0) {
    RandomStream rng(seed);
    CMat noise(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) noise(i, j) = rng.normal();
    CMat spec = dft2(noise);
    for (int i = 0; i < h; ++i) {
        const double ky = (i <= h / 2) ? i : i - h;
        for (int j = 0; j < w; ++j) {
            const double kx = (j <= w / 2) ? j : j - w;
            spec(i, j) *= std::exp(-(kx * kx + ky * ky) / (2.0 * k0 * k0));
        }
    }
    CMat sm = idft2(spec);
    Field out(h, w);
    double mean = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            out.at(i, j) = sm(i, j).real();
            mean += out.at(i, j);
        }
    mean /= (h * w);
    double var = 0.0;
    for (std::int64_t i = 0; i < out.values.numel(); ++i) {
        out.values[i] -= mean;
        var += out.values[i] * out.values[i];
    }
    var /= (h * w);
    const double inv = 1.0 / std::sqrt(std::max(var, 1e-30));
    for (std::int64_t i = 0; i < out.values.numel(); ++i) out.values[i] *= inv;
    return out;
}

// ---------------------------------------------------------------------------
// Darcy flow: -div(a grad u) = 1 on the unit square, u = 0 on the boundary
// ---------------------------------------------------------------------------

namespace darcy {

/// Apply the 5-point finite-difference operator A_h for coefficient a.
/// Unknowns sit on an H x W interior grid with spacing 1/(W+1), 1/(H+1);
/// face coefficients are arithmetic means, boundary values are zero.
inline void apply_operator(const Field& a, const std::vector<double>& u,
                           std::vector<double>& out) {
    const int h = a.height(), w = a.width();
    const double hx = 1.0 / (w + 1), hy = 1.0 / (h + 1);
    const double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy);
    auto uat = [&](int i, int j) -> double {
        if (i < 0 || i >= h || j < 0 || j >= w) return 0.0;
        return u[static_cast<std::size_t>(i) * w + j];
    };
    auto aat = [&](int i, int j) -> double {
        i = std::clamp(i, 0, h - 1);
        j = std::clamp(j, 0, w - 1);
        return a.at(i, j);
    };
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double ae = 0.5 * (aat(i, j) + aat(i, j + 1));
            const double aw = 0.5 * (aat(i, j) + aat(i, j - 1));
            const double an = 0.5 * (aat(i, j) + aat(i + 1, j));
            const double as = 0.5 * (aat(i, j) + aat(i - 1, j));
            const double uc = uat(i, j);
            out[static_cast<std::size_t>(i) * w + j] =
                ihx2 * (ae * (uc - uat(i, j + 1)) + aw * (uc - uat(i, j - 1))) +
                ihy2 * (an * (uc - uat(i + 1, j)) + as * (uc - uat(i - 1, j)));
        }
}

/// Conjugate gradient on the SPD 5-point system; relative tolerance on ||r||.
inline Field solve(const Field& a, double tol = 1e-10, int max_iter = -1) {
    const int h = a.height(), w = a.width();
    const std::size_t n = static_cast<std::size_t>(h) * w;
    if (max_iter < 0) max_iter = static_cast<int>(20 * n);
    std::vector<double> u(n, 0.0), r(n, 1.0), p(n, 1.0), ap(n, 0.0);
    const double b_norm = std::sqrt(static_cast<double>(n));
    double rs = static_cast<double>(n); // r = f = 1 initially
    for (int it = 0; it < max_iter; ++it) {
        if (std::sqrt(rs) <= tol * b_norm) break;
        apply_operator(a, p, ap);
        double pap = 0.0;
        for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
        if (!(pap > 0.0) || !std::isfinite(pap))
            throw NumericalError("darcy: CG breakdown (system not SPD or singular)");
        const double alpha = rs / pap;
        double rs_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            rs_new += r[i] * r[i];
        }
        const double beta = rs_new / rs;
        rs = rs_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    if (std::sqrt(rs) > tol * b_norm)
        throw NumericalError("darcy: CG did not converge");
    Field uf(h, w);
    std::copy(u.begin(), u.end(), uf.values.data());
    return uf;
}

/// Max-norm of A_h u - f with f = 1.
inline double residual_inf(const Field& a, const Field& u) {
    const int h = a.height(), w = a.width();
    std::vector<double> uv(u.values.vec()), au(static_cast<std::size_t>(h) * w);
    apply_operator(a, uv, au);
    double m = 0.0;
    for (double v : au) m = std::max(m, std::abs(v - 1.0));
    return m;
}

/// Two-valued permeability: smoothed GRF thresholded at its median, mapped to
/// {1, beta} (above-median pixels take beta).
inline Field permeability(int h, int w, double beta, std::uint64_t seed) {
    Field g = gaussian_random_field(h, w, seed);
    std::vector<double> sorted(g.values.vec());
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double median = sorted[sorted.size() / 2];
    Field a(h, w);
    for (std::int64_t i = 0; i < a.values.numel(); ++i)
        a.values[i] = g.values[i] > median ? beta : 1.0;
    return a;
}

} // namespace darcy

inline OperatorDataset generate_darcy(double beta, int n_samples, int h, int w,
                                      std::uint64_t seed) {
    if (n_samples < 1) throw ConfigError("generate_darcy: n_samples must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("generate_darcy: beta must be positive");
    OperatorDataset ds;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "DarcyFlow-%g", beta);
    ds.name = buf;
    ds.generator_params = {{"beta", beta},
                           {"seed", static_cast<double>(seed)},
                           {"n", static_cast<double>(n_samples)},
                           {"H", static_cast<double>(h)},
                           {"W", static_cast<double>(w)}};
    for (int s = 0; s < n_samples; ++s) {
        Field a = darcy::permeability(h, w, beta, mix_seed(seed, static_cast<std::uint64_t>(s)));
        Field u;
        try {
            u = darcy::solve(a);
        } catch (const NumericalError& e) {
            throw NumericalError("generate_darcy: sample " + std::to_string(s) + ": " +
                                 e.what());
        }
        const double res = darcy::residual_inf(a, u);
        if (!(res < 1e-8))
            throw NumericalError("generate_darcy: sample " + std::to_string(s) +
                                 " residual " + std::to_string(res) + " exceeds 1e-8");
        ds.samples.emplace_back(std::move(a), std::move(u));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Incompressible Navier-Stokes, 2D vorticity form, pseudo-spectral
// ---------------------------------------------------------------------------

/// Pseudo-spectral vorticity solver on the periodic [0,2pi)^2 square with RK2
/// stepping and 2/3-rule dealiasing. Advection is computed in divergence form
/// so the k=0 mode (mean vorticity) is untouched by construction.
class NavierStokesSolver {
public:
    NavierStokesSolver(const Field& initial_vorticity, double viscosity)
        : h_(initial_vorticity.height()), w_(initial_vorticity.width()), nu_(viscosity) {
        if (!(nu_ > 0.0)) throw ConfigError("ns: viscosity must be positive");
        omega_hat_ = dft2_real(initial_vorticity.values);
        kx_.resize(w_);
        ky_.resize(h_);
        for (int j = 0; j < w_; ++j) kx_[j] = (j <= w_ / 2) ? j : j - w_;
        for (int i = 0; i < h_; ++i) ky_[i] = (i <= h_ / 2) ? i : i - h_;
    }

    /// One RK2 (Heun) step. Throws NumericalError when the advective CFL
    /// number exceeds cfl_limit.
    void step(double dt, double cfl_limit = 0.8) {
        CMat k1 = rhs(omega_hat_, dt, cfl_limit);
        CMat mid = omega_hat_ + dt * k1;
        CMat k2 = rhs(mid, dt, cfl_limit);
        omega_hat_ += (dt * 0.5) * (k1 + k2);
    }

    Field vorticity() const {
        CMat om = idft2(omega_hat_);
        Field f(h_, w_);
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j) f.at(i, j) = om(i, j).real();
        return f;
    }

    double mean_vorticity() const { return omega_hat_(0, 0).real() / (h_ * w_); }

    /// Kinetic energy (1/2) mean(|u|^2) from the spectral coefficients.
    double energy() const {
        double e = 0.0;
        const double n2 = static_cast<double>(h_) * w_;
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j) {
                const double k2 = kx_[j] * kx_[j] + ky_[i] * ky_[i];
                if (k2 == 0.0) continue;
                e += std::norm(omega_hat_(i, j)) / k2;
            }
        return 0.5 * e / (n2 * n2);
    }

    double max_speed() const {
        CMat u_hat(h_, w_), v_hat(h_, w_);
        velocity_hat(omega_hat_, u_hat, v_hat);
        CMat u = idft2(u_hat), v = idft2(v_hat);
        double m = 0.0;
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j)
                m = std::max(m, std::max(std::abs(u(i, j).real()), std::abs(v(i, j).real())));
        return m;
    }

private:
    void velocity_hat(const CMat& om_hat, CMat& u_hat, CMat& v_hat) const {
        const std::complex<double> I(0.0, 1.0);
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j) {
                const double k2 = kx_[j] * kx_[j] + ky_[i] * ky_[i];
                if (k2 == 0.0) {
                    u_hat(i, j) = v_hat(i, j) = 0.0;
                    continue;
                }
                const std::complex<double> psi = om_hat(i, j) / k2; // -lap psi = omega
                u_hat(i, j) = I * ky_[i] * psi;                     //  d(psi)/dy
                v_hat(i, j) = -I * kx_[j] * psi;                    // -d(psi)/dx
            }
    }

    CMat rhs(const CMat& om_hat, double dt, double cfl_limit) const {
        const std::complex<double> I(0.0, 1.0);
        CMat u_hat(h_, w_), v_hat(h_, w_);
        velocity_hat(om_hat, u_hat, v_hat);
        CMat u = idft2(u_hat), v = idft2(v_hat), om = idft2(om_hat);
        const double dx = 2.0 * 3.14159265358979323846 / std::max(h_, w_);
        double umax = 0.0;
        CMat uw(h_, w_), vw(h_, w_);
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j) {
                const double ur = u(i, j).real(), vr = v(i, j).real(), wr = om(i, j).real();
                umax = std::max(umax, std::max(std::abs(ur), std::abs(vr)));
                uw(i, j) = ur * wr;
                vw(i, j) = vr * wr;
            }
        if (umax * dt / dx > cfl_limit)
            throw NumericalError("ns: CFL violation (u_max*dt/dx = " +
                                 std::to_string(umax * dt / dx) + ")");
        CMat uw_hat = dft2(uw), vw_hat = dft2(vw);
        CMat out(h_, w_);
        const double kx_cut = w_ / 3.0, ky_cut = h_ / 3.0;
        for (int i = 0; i < h_; ++i)
            for (int j = 0; j < w_; ++j) {
                const double k2 = kx_[j] * kx_[j] + ky_[i] * ky_[i];
                std::complex<double> adv =
                    I * kx_[j] * uw_hat(i, j) + I * ky_[i] * vw_hat(i, j);
                if (std::abs(kx_[j]) > kx_cut || std::abs(ky_[i]) > ky_cut) adv = 0.0;
                out(i, j) = -adv - nu_ * k2 * om_hat(i, j);
            }
        return out;
    }

    int h_, w_;
    double nu_;
    CMat omega_hat_;
    std::vector<double> kx_, ky_;
};

/// Filtered Gaussian random field used as the initial vorticity.
inline Field ns_initial_vorticity(int h, int w, std::uint64_t seed) {
    Field f = gaussian_random_field(h, w, seed, 4.0);
    // Scale to a moderate amplitude so default time steps stay CFL-stable.
    for (std::int64_t i = 0; i < f.values.numel(); ++i) f.values[i] *= 1.5;
    return f;
}

inline OperatorDataset generate_navier_stokes(std::uint64_t ic_seed, int n_samples, int h,
                                              int w, double t_final, double viscosity) {
    if (n_samples < 1) throw ConfigError("generate_navier_stokes: n_samples must be >= 1");
    if (!(t_final > 0.0)) throw ConfigError("generate_navier_stokes: T_final must be positive");
    if (!(viscosity > 0.0)) throw ConfigError("generate_navier_stokes: viscosity must be positive");
    OperatorDataset ds;
    ds.name = "NavierStokes-" + std::to_string(ic_seed);
    ds.generator_params = {{"ic_seed", static_cast<double>(ic_seed)},
                           {"T_final", t_final},
                           {"viscosity", viscosity},
                           {"n", static_cast<double>(n_samples)},
                           {"H", static_cast<double>(h)},
                           {"W", static_cast<double>(w)}};
    const double dx = 2.0 * 3.14159265358979323846 / std::max(h, w);
    for (int s = 0; s < n_samples; ++s) {
        Field a = ns_initial_vorticity(h, w, mix_seed(ic_seed, static_cast<std::uint64_t>(s)));
        NavierStokesSolver solver(a, viscosity);
        const double u0 = std::max(solver.max_speed(), 1e-6);
        const int n_steps =
            std::max(1, static_cast<int>(std::ceil(t_final / (0.3 * dx / u0))));
        const double dt = t_final / n_steps;
        const double mean0 = solver.mean_vorticity();
        try {
            for (int k = 0; k < n_steps; ++k) solver.step(dt);
        } catch (const NumericalError& e) {
            throw NumericalError("generate_navier_stokes: sample " + std::to_string(s) +
                                 ": " + e.what());
        }
        if (std::abs(solver.mean_vorticity() - mean0) > 1e-6)
            throw NumericalError("generate_navier_stokes: sample " + std::to_string(s) +
                                 " mean-vorticity drift exceeds 1e-6");
        ds.samples.emplace_back(std::move(a), solver.vorticity());
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Gaussian normalizer
// ---------------------------------------------------------------------------

/// Per-role mean/std over all pixels of all samples. A constant field clamps
/// std to 1e-12 with a warning on stderr.
inline std::pair<NormalizerStats, NormalizerStats> fit_normalizer(const OperatorDataset& ds) {
    if (ds.samples.empty()) throw ConfigError("fit_normalizer: empty dataset");
    auto fit = [&](bool use_a, FieldRole role) {
        double sum = 0.0, sq = 0.0;
        std::int64_t count = 0;
        for (const auto& [a, u] : ds.samples) {
            const Tensor& t = use_a ? a.values : u.values;
            for (std::int64_t i = 0; i < t.numel(); ++i) {
                sum += t[i];
                sq += t[i] * t[i];
            }
            count += t.numel();
        }
        NormalizerStats st;
        st.role = role;
        st.mean = sum / count;
        const double var = std::max(0.0, sq / count - st.mean * st.mean);
        st.std = std::sqrt(var);
        if (st.std < 1e-12) {
            std::fprintf(stderr,
                         "warning: fit_normalizer: near-constant %s field in '%s', "
                         "clamping std to 1e-12\n",
                         use_a ? "a" : "u", ds.name.c_str());
            st.std = 1e-12;
        }
        return st;
    };
    return {fit(true, FieldRole::input_a), fit(false, FieldRole::output_u)};
}

} // namespace mofs
