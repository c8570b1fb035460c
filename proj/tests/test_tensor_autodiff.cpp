#include <catch2/catch_amalgamated.hpp>

#include "mofs/autodiff.hpp"
#include "mofs/nn.hpp"
#include "mofs/rng.hpp"
#include "support/gradcheck.hpp"

using namespace mofs;
using ad::Var;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    RandomStream rng(seed);
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    return t;
}

} // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    REQUIRE(t.numel() == 6);
    t.at(1, 2) = 5.0;
    REQUIRE(t[5] == 5.0);
    REQUIRE(t.all_finite());
    REQUIRE_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), ConfigError);
}

TEST_CASE("autodiff matches central differences on elementwise ops") {
    auto x = ad::leaf(random_tensor({3, 4}, 7));
    auto y = ad::leaf(random_tensor({3, 4}, 8));
    auto loss = [&] {
        Var z = ad::mul(ad::add(x, y), ad::sub(x, y));
        z = ad::add(z, ad::gelu(x));
        z = ad::add(z, ad::sigmoid(y));
        z = ad::add(z, ad::square(ad::cadd(x, 0.5)));
        return ad::sum_all(ad::mul(z, z));
    };
    auto res = testsupport::grad_check(loss, {x, y}, 8);
    REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("autodiff matches central differences on matmul/transpose/softmax/layernorm") {
    auto a = ad::leaf(random_tensor({3, 5}, 11));
    auto b = ad::leaf(random_tensor({5, 4}, 12));
    auto wt = ad::constant(random_tensor({3, 3}, 13));
    auto loss = [&] {
        Var m = ad::matmul(a, b);
        Var sm = ad::softmax_rows(m);
        Var ln = ad::layernorm_rows(ad::matmul(sm, ad::transpose2(m)));
        return ad::sum_all(ad::square(ad::mul(ln, wt)));
    };
    auto res = testsupport::grad_check(loss, {a, b}, 10);
    REQUIRE(res.max_rel_err < 1e-5);
}

TEST_CASE("autodiff broadcast and reduction ops") {
    auto x = ad::leaf(random_tensor({4, 3}, 21));
    auto v = ad::leaf(random_tensor({1, 3}, 22));
    auto s = ad::leaf(random_tensor({4, 1}, 23));
    auto eta = ad::leaf(Tensor::scalar(0.37));
    auto loss = [&] {
        Var z = ad::add_rowvec(x, v);
        z = ad::mul_rowvec(z, v);
        z = ad::mul_colvec(z, s);
        z = ad::scalar_mul(eta, z);
        Var pooled = ad::mean_rows(z);
        return ad::add(ad::sum_all(ad::square(pooled)), ad::mean_all(ad::square(z)));
    };
    auto res = testsupport::grad_check(loss, {x, v, s, eta}, 8);
    REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("autodiff shape ops round-trip gradients") {
    auto x = ad::leaf(random_tensor({2, 6}, 31));
    auto y = ad::leaf(random_tensor({3, 6}, 32));
    auto loss = [&] {
        Var c = ad::concat_rows({x, y});
        Var top = ad::slice_rows(c, 0, 2);
        Var cc = ad::concat_cols(top, top);
        Var r = ad::reshape(cc, {4, 6});
        return ad::sum_all(ad::square(r));
    };
    auto res = testsupport::grad_check(loss, {x, y}, 8);
    REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("autodiff conv/pool/resize ops") {
    auto x = ad::leaf(random_tensor({2, 4, 4}, 41));
    auto loss = [&] {
        Var c = ad::im2col3(x);
        Var p = ad::avgpool2(x);
        Var u = ad::upsample2(p);
        Var r = ad::bilinear_resize(x, 6, 6);
        return ad::add(ad::sum_all(ad::square(c)),
                       ad::add(ad::sum_all(ad::square(u)), ad::sum_all(ad::square(r))));
    };
    auto res = testsupport::grad_check(loss, {x}, 10);
    REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("autodiff spectral gather/contract/scatter ops") {
    const int cin = 2, cout = 3, m1 = 2, m2 = 2, h = 6, w = 6;
    auto xre = ad::leaf(random_tensor({cin, h, w}, 51));
    auto xim = ad::leaf(random_tensor({cin, h, w}, 52));
    auto wre = ad::leaf(random_tensor({cin * cout * m1 * m2}, 53));
    auto loss = [&] {
        Var gre = ad::gather_corner(xre, m1, m2);
        Var gim = ad::gather_corner(xim, m1, m2);
        Var y = ad::mode_contract(wre, ad::add(gre, gim), cin, cout, m1 * m2);
        Var sp = ad::scatter_conj(y, m1, m2, h, w, +1);
        Var sm = ad::scatter_conj(y, m1, m2, h, w, -1);
        return ad::add(ad::sum_all(ad::square(sp)), ad::sum_all(ad::square(sm)));
    };
    auto res = testsupport::grad_check(loss, {xre, xim, wre}, 10);
    REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("tokens/map layout conversion is an exact inverse pair") {
    auto x = ad::leaf(random_tensor({3, 4, 5}, 61));
    Var t = ad::tokens_from_map(x);
    REQUIRE(t->value.dim(0) == 20);
    REQUIRE(t->value.dim(1) == 3);
    Var back = ad::map_from_tokens(t, 4, 5);
    for (std::int64_t i = 0; i < x->value.numel(); ++i)
        REQUIRE(back->value[i] == x->value[i]);
    auto loss = [&] {
        return ad::sum_all(ad::square(ad::map_from_tokens(ad::tokens_from_map(x), 4, 5)));
    };
    auto res = testsupport::grad_check(loss, {x}, 6);
    REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax rows sum to one") {
    auto x = ad::constant(random_tensor({5, 7}, 71));
    Var sm = ad::softmax_rows(x);
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 7; ++j) s += sm->value.at(i, j);
        REQUIRE(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("layernorm rows have zero mean and unit variance") {
    auto x = ad::constant(random_tensor({4, 8}, 81));
    Var ln = ad::layernorm_rows(x);
    for (int i = 0; i < 4; ++i) {
        double mu = 0.0, var = 0.0;
        for (int j = 0; j < 8; ++j) mu += ln->value.at(i, j);
        mu /= 8;
        for (int j = 0; j < 8; ++j) {
            const double c = ln->value.at(i, j) - mu;
            var += c * c;
        }
        var /= 8;
        REQUIRE(std::abs(mu) < 1e-12);
        REQUIRE(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("linear layer and adam take a correct descent step") {
    RandomStream rng(5);
    Linear lin(3, 2, true, rng);
    ParamList params;
    lin.collect("lin", params);
    Adam opt(1e-2);
    auto x = ad::constant(random_tensor({8, 3}, 91));
    auto target = ad::constant(ad::matmul(x, ad::constant(random_tensor({3, 2}, 92)))->value);
    double first = 0.0, last = 0.0;
    for (int it = 0; it < 50; ++it) {
        zero_grads(params);
        Var loss = ad::mean_all(ad::square(ad::sub(lin.fwd(x), target)));
        if (it == 0) first = loss->value[0];
        last = loss->value[0];
        ad::backward(loss);
        opt.step(params);
    }
    REQUIRE(last < 0.5 * first);
}

TEST_CASE("grad check catches missing gradients") {
    // Sanity check of the oracle itself: sum over a constant has zero grad.
    auto x = ad::leaf(random_tensor({2, 2}, 99));
    auto c = ad::constant(random_tensor({2, 2}, 100));
    auto loss = [&] { return ad::sum_all(ad::mul(x, c)); };
    auto res = testsupport::grad_check(loss, {x}, 4);
    REQUIRE(res.max_rel_err < 1e-8);
}
