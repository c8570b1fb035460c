#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mofs/dft.hpp"
#include "mofs/rng.hpp"
#include "support/gradcheck.hpp"

using namespace mofs;

namespace {

Tensor random_field(int h, int w, std::uint64_t seed) {
    RandomStream rng(seed);
    Tensor t({h, w});
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

} // namespace

TEST_CASE("dft2 of a constant field is a single DC entry c*H*W") {
    const int h = 8, w = 8;
    Tensor f = Tensor::full({h, w}, 3.25);
    CMat spec = dft2_real(f);
    REQUIRE(std::abs(spec(0, 0).real() - 3.25 * h * w) < 1e-9);
    REQUIRE(std::abs(spec(0, 0).imag()) < 1e-9);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (i || j) REQUIRE(std::abs(spec(i, j)) < 1e-9);
}

TEST_CASE("idft2 ∘ dft2 is the identity on random fields") {
    const int h = 16, w = 16;
    Tensor f = random_field(h, w, 3);
    CMat back = idft2(dft2_real(f));
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            REQUIRE(std::abs(back(i, j).real() - f.at(i, j)) < 1e-6);
            REQUIRE(std::abs(back(i, j).imag()) < 1e-6);
        }
}

TEST_CASE("dft2 of a pure cosine at mode (1,0) gives two conjugate peaks H*W/2") {
    const int h = 12, w = 10;
    Tensor f({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            f.at(i, j) = std::cos(2.0 * 3.14159265358979323846 * i / h);
    CMat spec = dft2_real(f);
    REQUIRE(std::abs(spec(1, 0).real() - 0.5 * h * w) < 1e-8);
    REQUIRE(std::abs(spec(h - 1, 0).real() - 0.5 * h * w) < 1e-8);
    REQUIRE(std::abs(spec(1, 0).imag()) < 1e-8);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (!((i == 1 || i == h - 1) && j == 0)) REQUIRE(std::abs(spec(i, j)) < 1e-8);
}

TEST_CASE("autodiff dft2 agrees with the plain transform") {
    const int h = 8, w = 6;
    Tensor f = random_field(h, w, 9);
    Tensor m({1, h, w}, f.vec());
    auto x = ad::constant(m);
    auto spec = ad::dft2(x);
    CMat ref = dft2_real(f);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            REQUIRE(std::abs(spec.re->value.at(0, i, j) - ref(i, j).real()) < 1e-9);
            REQUIRE(std::abs(spec.im->value.at(0, i, j) - ref(i, j).imag()) < 1e-9);
        }
    // Round trip through the autodiff inverse.
    auto back = ad::idft2_real(spec);
    auto imag = ad::idft2_imag(spec);
    for (std::int64_t i = 0; i < m.numel(); ++i) {
        REQUIRE(std::abs(back->value[i] - m[i]) < 1e-9);
        REQUIRE(std::abs(imag->value[i]) < 1e-9);
    }
}

TEST_CASE("autodiff dft magnitude gradient matches central differences") {
    auto x = ad::leaf(Tensor({1, 4, 4}, random_field(4, 4, 17).vec()));
    auto loss = [&] { return ad::sum_all(ad::square(ad::dft2_magnitude(x))); };
    auto res = testsupport::grad_check(loss, {x}, 10, 1e-5);
    REQUIRE(res.max_rel_err < 1e-5);
}
