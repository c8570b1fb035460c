#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mofs/pde_data.hpp"

using namespace mofs;

namespace {

// Independent residual oracle: assemble the 5-point matrix explicitly from
// the textbook stencil (row-by-row triplets) and form A*u - f directly.
// Must stay independent of darcy::apply_operator.
double assembled_residual_inf(const Field& a, const Field& u) {
    const int h = a.height(), w = a.width();
    const int n = h * w;
    const double hx = 1.0 / (w + 1), hy = 1.0 / (h + 1);
    auto idx = [&](int i, int j) { return i * w + j; };
    auto acl = [&](int i, int j) {
        i = std::min(std::max(i, 0), h - 1);
        j = std::min(std::max(j, 0), w - 1);
        return a.at(i, j);
    };
    std::vector<double> au(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double ae = 0.5 * (acl(i, j) + acl(i, j + 1));
            const double aw = 0.5 * (acl(i, j) + acl(i, j - 1));
            const double an = 0.5 * (acl(i, j) + acl(i + 1, j));
            const double as = 0.5 * (acl(i, j) + acl(i - 1, j));
            const double diag = (ae + aw) / (hx * hx) + (an + as) / (hy * hy);
            // Row entries of A: diagonal plus the four off-diagonal couplings.
            double acc = diag * u.values[idx(i, j)];
            if (j + 1 < w) acc -= ae / (hx * hx) * u.values[idx(i, j + 1)];
            if (j - 1 >= 0) acc -= aw / (hx * hx) * u.values[idx(i, j - 1)];
            if (i + 1 < h) acc -= an / (hy * hy) * u.values[idx(i + 1, j)];
            if (i - 1 >= 0) acc -= as / (hy * hy) * u.values[idx(i - 1, j)];
            au[static_cast<std::size_t>(idx(i, j))] = acc;
        }
    double m = 0.0;
    for (double v : au) m = std::max(m, std::abs(v - 1.0));
    return m;
}

} // namespace

TEST_CASE("darcy beta=1 gives constant coefficient and the Poisson solution") {
    auto ds = generate_darcy(1.0, 2, 12, 12, 0);
    for (const auto& [a, u] : ds.samples) {
        for (std::int64_t i = 0; i < a.values.numel(); ++i) REQUIRE(a.values[i] == 1.0);
        REQUIRE(assembled_residual_inf(a, u) < 1e-8);
    }
    // Same beta=1 solve equals solving -lap u = 1 with unit coefficient.
    Field ones(12, 12);
    for (std::int64_t i = 0; i < ones.values.numel(); ++i) ones.values[i] = 1.0;
    Field u_poisson = darcy::solve(ones);
    for (std::int64_t i = 0; i < u_poisson.values.numel(); ++i)
        REQUIRE(std::abs(u_poisson.values[i] - ds.samples[0].second.values[i]) < 1e-9);
}

TEST_CASE("darcy residual oracle holds on the paper's beta grid") {
    for (double beta : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        auto ds = generate_darcy(beta, 2, 16, 16, 7);
        for (const auto& [a, u] : ds.samples) {
            REQUIRE(assembled_residual_inf(a, u) < 1e-8);
            for (std::int64_t i = 0; i < a.values.numel(); ++i)
                REQUIRE((a.values[i] == 1.0 || a.values[i] == beta));
        }
    }
}

TEST_CASE("darcy with mirror-symmetric coefficient gives mirror-symmetric solution") {
    const int h = 16, w = 16;
    Field g = gaussian_random_field(h, w, 5);
    Field a(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double sym = 0.5 * (g.at(i, j) + g.at(i, w - 1 - j));
            a.at(i, j) = sym > 0 ? 10.0 : 1.0;
        }
    Field u = darcy::solve(a, 1e-12);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            REQUIRE(std::abs(u.at(i, j) - u.at(i, w - 1 - j)) < 1e-8);
}

TEST_CASE("darcy generation is deterministic given the seed") {
    auto d1 = generate_darcy(10.0, 3, 16, 16, 42);
    auto d2 = generate_darcy(10.0, 3, 16, 16, 42);
    for (int s = 0; s < 3; ++s)
        for (std::int64_t i = 0; i < d1.samples[s].first.values.numel(); ++i) {
            REQUIRE(d1.samples[s].first.values[i] == d2.samples[s].first.values[i]);
            REQUIRE(d1.samples[s].second.values[i] == d2.samples[s].second.values[i]);
        }
    REQUIRE_THROWS_AS(generate_darcy(0.0, 1, 8, 8, 0), ConfigError);
    REQUIRE_THROWS_AS(generate_darcy(1.0, 0, 8, 8, 0), ConfigError);
}

TEST_CASE("navier-stokes: zero initial vorticity stays exactly zero") {
    Field zero(16, 16);
    NavierStokesSolver solver(zero, 1e-3);
    for (int k = 0; k < 10; ++k) solver.step(0.01);
    Field u = solver.vorticity();
    REQUIRE(u.values.max_abs() < 1e-14);
}

TEST_CASE("navier-stokes conserves mean vorticity and dissipates energy") {
    Field ic = ns_initial_vorticity(16, 16, 3);
    NavierStokesSolver solver(ic, 1e-3);
    const double mean0 = solver.mean_vorticity();
    double prev_e = solver.energy();
    for (int k = 0; k < 10; ++k) {
        solver.step(0.02);
        const double e = solver.energy();
        REQUIRE(e <= prev_e * (1.0 + 1e-12));
        prev_e = e;
    }
    REQUIRE(std::abs(solver.mean_vorticity() - mean0) < 1e-6);
}

TEST_CASE("navier-stokes generator covers the protocol's ic seeds and checks CFL") {
    for (std::uint64_t ic : {0ULL, 1ULL, 10ULL, 100ULL, 101ULL, 102ULL}) {
        auto ds = generate_navier_stokes(ic, 1, 16, 16, 0.5, 1e-3);
        REQUIRE(ds.samples.size() == 1);
        REQUIRE(std::abs(ds.samples[0].second.values.sum() / 256.0 -
                         ds.samples[0].first.values.sum() / 256.0) < 1e-6);
    }
    // A huge explicit step must trip the CFL guard.
    Field ic = ns_initial_vorticity(16, 16, 0);
    NavierStokesSolver solver(ic, 1e-3);
    REQUIRE_THROWS_AS(solver.step(50.0), NumericalError);
}

TEST_CASE("fit_normalizer closed forms and round trip") {
    OperatorDataset ds;
    ds.name = "toy";
    Field a(2, 2), u(2, 2);
    a.values = Tensor({2, 2}, {0.0, 2.0, 0.0, 2.0});
    u.values = Tensor({2, 2}, {3.0, 3.0, 3.0, 3.0});
    ds.samples.emplace_back(a, u);
    auto [na, nu] = fit_normalizer(ds);
    REQUIRE(std::abs(na.mean - 1.0) < 1e-12);
    REQUIRE(std::abs(na.std - 1.0) < 1e-12);
    // Constant u field: mean c, clamped std, normalizes to all zeros.
    REQUIRE(std::abs(nu.mean - 3.0) < 1e-12);
    REQUIRE(nu.std == 1e-12);
    Field un = nu.apply(u);
    for (std::int64_t i = 0; i < un.values.numel(); ++i) REQUIRE(un.values[i] == 0.0);
    // apply then invert is the identity within 1e-6.
    Field an = na.apply(a);
    Field back = na.invert(an);
    for (std::int64_t i = 0; i < back.values.numel(); ++i)
        REQUIRE(std::abs(back.values[i] - a.values[i]) < 1e-6);
    OperatorDataset empty;
    REQUIRE_THROWS_AS(fit_normalizer(empty), ConfigError);
}
