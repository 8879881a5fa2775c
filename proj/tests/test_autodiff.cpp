#include <cmath>
#include <vector>

#include "doctest.h"
#include "vifuse/fdcheck.hpp"
#include "vifuse/ops.hpp"

using namespace vifuse;

namespace {

Tensor<double> randn(Rng& rng, const Shape& shape, double sd = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = sd * rng.normal();
    return t;
}

Tensor<double> randu(Rng& rng, const Shape& shape, double lo, double hi) {
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

// FD-checks a scalar-valued builder over its leaves and asserts the backward
// gradients match central differences.
void expect_grad_ok(const std::function<Tensor<double>()>& build,
                    const std::vector<Tensor<double>>& leaves, double tol = 1e-6) {
    FdResult r = fd_check(build, leaves);
    INFO("worst element: ", r.worst, " rel ", r.max_rel_err, " abs ", r.max_abs_err);
    CHECK(r.max_rel_err < tol);
}

}  // namespace

TEST_CASE("tensor construction and accessors") {
    Tensor<float> z = Tensor<float>::zeros({2, 3});
    CHECK(z.ndim() == 2);
    CHECK(z.dim(0) == 2);
    CHECK(z.dim(1) == 3);
    CHECK(z.numel() == 6);
    for (int64_t i = 0; i < 6; ++i) CHECK(z.data()[i] == 0.0f);

    Tensor<float> f = Tensor<float>::full({4}, 2.5f);
    for (int64_t i = 0; i < 4; ++i) CHECK(f.data()[i] == 2.5f);

    CHECK(Tensor<float>::scalar(7.0f).item() == 7.0f);
    CHECK_THROWS_AS((void)z.item(), Error);

    CHECK_THROWS_AS(Tensor<float>::from_data({3}, {1.0f, 2.0f}), Error);
    Tensor<float> d = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(d.data()[3] == 4.0f);

    Tensor<float> undef;
    CHECK(!undef.defined());
    CHECK(d.defined());
}

TEST_CASE("elementwise forward values") {
    auto a = Tensor<double>::from_data({4}, {1.0, -2.0, 0.0, 3.0});
    auto b = Tensor<double>::from_data({4}, {0.5, 4.0, -1.0, 3.0});

    CHECK(add(a, b).value() == std::vector<double>{1.5, 2.0, -1.0, 6.0});
    CHECK(sub(a, b).value() == std::vector<double>{0.5, -6.0, 1.0, 0.0});
    CHECK(mul(a, b).value() == std::vector<double>{0.5, -8.0, 0.0, 9.0});
    CHECK(div(a, b).value() == std::vector<double>{2.0, -0.5, 0.0, 1.0});
    CHECK(maximum(a, b).value() == std::vector<double>{1.0, 4.0, 0.0, 3.0});
    CHECK(affine(a, 2.0, 1.0).value() == std::vector<double>{3.0, -3.0, 1.0, 7.0});
    CHECK(abs(a).value() == std::vector<double>{1.0, 2.0, 0.0, 3.0});
    CHECK(relu(a).value() == std::vector<double>{1.0, 0.0, 0.0, 3.0});

    CHECK(exp(Tensor<double>::scalar(1.0)).item() == doctest::Approx(std::exp(1.0)));
    CHECK(log(Tensor<double>::scalar(std::exp(2.0))).item() == doctest::Approx(2.0));
    CHECK(tanh(Tensor<double>::scalar(0.5)).item() == doctest::Approx(std::tanh(0.5)));
    CHECK(sigmoid(Tensor<double>::scalar(0.0)).item() == doctest::Approx(0.5));
    // Exact GELU at x = 1: 1 * Phi(1) = 0.841344746...
    CHECK(gelu(Tensor<double>::scalar(1.0)).item() ==
          doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(pow_scalar(Tensor<double>::scalar(2.0), 3.0).item() == doctest::Approx(8.0));

    CHECK_THROWS_AS(add(a, Tensor<double>::zeros({3})), Error);
}

TEST_CASE("reductions forward values") {
    auto x = Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(sum(x).item() == 10.0);
    CHECK(mean(x).item() == 2.5);

    auto img = Tensor<double>::from_data({1, 2, 1, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(channel_sum(img).value() == std::vector<double>{3.0, 7.0});

    auto s = softmax(Tensor<double>::from_data({1, 3}, {1.0, 2.0, 3.0}), 1);
    double total = s.data()[0] + s.data()[1] + s.data()[2];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.data()[2] > s.data()[1]);

    // log_softmax must agree with log(softmax) and survive large inputs.
    auto big = Tensor<double>::from_data({1, 2}, {1000.0, 1000.5});
    auto ls = log_softmax(big, 1);
    CHECK(std::isfinite(ls.data()[0]));
    CHECK(std::exp(ls.data()[0]) + std::exp(ls.data()[1]) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shape ops forward values") {
    auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(reshape(x, {3, 2}).shape() == Shape{3, 2});
    CHECK(reshape(x, {6}).value() == x.value());
    CHECK_THROWS_AS(reshape(x, {4}), Error);

    auto p = permute(x, {1, 0});
    CHECK(p.shape() == Shape{3, 2});
    CHECK(p.value() == std::vector<double>{1, 4, 2, 5, 3, 6});

    auto c = concat<double>({x, x}, 0);
    CHECK(c.shape() == Shape{4, 3});
    CHECK(slice(c, 0, 2, 2).value() == x.value());

    auto s = slice(x, 1, 1, 2);
    CHECK(s.shape() == Shape{2, 2});
    CHECK(s.value() == std::vector<double>{2, 3, 5, 6});

    auto img = Tensor<double>::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto padded = replicate_pad(img, 1);
    CHECK(padded.shape() == Shape{1, 1, 4, 4});
    // Corners replicate the nearest pixel.
    CHECK(padded.data()[0] == 1.0);
    CHECK(padded.data()[3] == 2.0);
    CHECK(padded.data()[15] == 4.0);

    CHECK(avg_pool2d(img, 2).item() == doctest::Approx(2.5));
    auto up = upsample_nearest2d(Tensor<double>::from_data({1, 1, 1, 2}, {1, 2}), 2);
    CHECK(up.shape() == Shape{1, 1, 2, 4});
    CHECK(up.value() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2});
}

TEST_CASE("matmul and linear against loop oracles") {
    Rng rng(7);
    auto a = randn(rng, {2, 3, 4});
    auto b = randn(rng, {2, 4, 5});
    auto c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 3, 5});
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 5; ++j) {
                double acc = 0;
                for (int64_t k = 0; k < 4; ++k)
                    acc += a.data()[(n * 3 + i) * 4 + k] * b.data()[(n * 4 + k) * 5 + j];
                CHECK(c.data()[(n * 3 + i) * 5 + j] == doctest::Approx(acc).epsilon(1e-12));
            }

    auto x = randn(rng, {3, 4});
    auto w = randn(rng, {2, 4});
    auto bias = randn(rng, {2});
    auto y = linear(x, w, bias);
    REQUIRE(y.shape() == Shape{3, 2});
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t o = 0; o < 2; ++o) {
            double acc = bias.data()[o];
            for (int64_t k = 0; k < 4; ++k)
                acc += x.data()[i * 4 + k] * w.data()[o * 4 + k];
            CHECK(y.data()[i * 2 + o] == doctest::Approx(acc).epsilon(1e-12));
        }

    CHECK_THROWS_AS(matmul(a, randn(rng, {2, 3, 5})), Error);
}

TEST_CASE("conv2d against brute-force loops") {
    Rng rng(11);
    const int64_t N = 2, Cin = 3, H = 5, W = 6, Cout = 4, kh = 3, kw = 3;
    for (auto [stride, pad] : {std::pair<int64_t, int64_t>{1, 1}, {1, 0}, {2, 1}}) {
        auto x = randn(rng, {N, Cin, H, W});
        auto w = randn(rng, {Cout, Cin, kh, kw});
        auto b = randn(rng, {Cout});
        auto y = conv2d(x, w, b, stride, pad);
        const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
        const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
        REQUIRE(y.shape() == Shape{N, Cout, Ho, Wo});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t co = 0; co < Cout; ++co)
                for (int64_t oy = 0; oy < Ho; ++oy)
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        double acc = b.data()[co];
                        for (int64_t ci = 0; ci < Cin; ++ci)
                            for (int64_t ky = 0; ky < kh; ++ky)
                                for (int64_t kx = 0; kx < kw; ++kx) {
                                    const int64_t iy = oy * stride - pad + ky;
                                    const int64_t ix = ox * stride - pad + kx;
                                    if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                    acc += x.data()[((n * Cin + ci) * H + iy) * W + ix] *
                                           w.data()[((co * Cin + ci) * kh + ky) * kw + kx];
                                }
                        CHECK(y.data()[((n * Cout + co) * Ho + oy) * Wo + ox] ==
                              doctest::Approx(acc).epsilon(1e-10));
                    }
    }

    CHECK_THROWS_AS(conv2d(randn(rng, {1, 2, 4, 4}), randn(rng, {3, 3, 3, 3}),
                           Tensor<double>{}),
                    Error);
}

TEST_CASE("backward matches analytic gradient for sum of squares") {
    // Cross-validates the tape and the FD harness on a case with a closed
    // form: d/dx sum(x*x) = 2x.
    Rng rng(3);
    auto x = randn(rng, {5});
    x.set_requires_grad();
    {
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        auto loss = sum(mul(x, x));
        tape.backward(loss);
    }
    REQUIRE(x.grad().size() == 5);
    for (int64_t i = 0; i < 5; ++i)
        CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-14));

    x.clear_grad();
    expect_grad_ok([&] { return sum(mul(x, x)); }, {x}, 1e-8);
}

TEST_CASE("gradients of elementwise ops") {
    Rng rng(5);
    auto a = randn(rng, {2, 3});
    auto b = randu(rng, {2, 3}, 0.5, 2.0);  // positive, safe for div/log
    a.set_requires_grad();
    b.set_requires_grad();

    expect_grad_ok([&] { return sum(add(a, b)); }, {a, b});
    expect_grad_ok([&] { return sum(sub(a, b)); }, {a, b});
    expect_grad_ok([&] { return sum(mul(a, b)); }, {a, b});
    expect_grad_ok([&] { return sum(div(a, b)); }, {a, b});
    expect_grad_ok([&] { return sum(maximum(a, b)); }, {a, b});
    expect_grad_ok([&] { return sum(affine(a, -1.5, 0.25)); }, {a});
    expect_grad_ok([&] { return sum(abs(a)); }, {a});
    expect_grad_ok([&] { return sum(exp(a)); }, {a});
    expect_grad_ok([&] { return sum(log(b)); }, {b});
    expect_grad_ok([&] { return sum(tanh(a)); }, {a});
    expect_grad_ok([&] { return sum(sigmoid(a)); }, {a});
    expect_grad_ok([&] { return sum(relu(a)); }, {a});
    expect_grad_ok([&] { return sum(gelu(a)); }, {a});
    expect_grad_ok([&] { return sum(pow_scalar(b, 1.7)); }, {b});
}

TEST_CASE("gradients of reductions and shape ops") {
    Rng rng(9);
    auto x = randn(rng, {2, 3, 4, 4});
    x.set_requires_grad();

    expect_grad_ok([&] { return mean(x); }, {x});
    expect_grad_ok([&] { return sum(channel_sum(mul(x, x))); }, {x});
    expect_grad_ok([&] { return sum(mul(softmax(x, 1), x)); }, {x});
    expect_grad_ok([&] { return sum(mul(log_softmax(x, 1), x)); }, {x});
    expect_grad_ok([&] { return sum(mul(reshape(x, {6, 16}), reshape(x, {6, 16}))); }, {x});
    expect_grad_ok([&] {
        auto p = permute(x, {0, 2, 3, 1});
        return sum(mul(p, p));
    }, {x});
    expect_grad_ok([&] { return sum(mul(slice(x, 1, 1, 2), slice(x, 1, 0, 2))); }, {x});
    expect_grad_ok([&] {
        auto c = concat<double>({x, x}, 0);
        return sum(mul(c, c));
    }, {x});
    expect_grad_ok([&] {
        auto p = replicate_pad(x, 2);
        return sum(mul(p, p));
    }, {x});
    expect_grad_ok([&] {
        auto p = avg_pool2d(x, 2);
        return sum(mul(p, p));
    }, {x});
    expect_grad_ok([&] {
        auto u = upsample_nearest2d(x, 2);
        return sum(mul(u, u));
    }, {x});
}

TEST_CASE("gradients of matmul, linear and conv2d") {
    Rng rng(13);
    auto a = randn(rng, {2, 3, 4});
    auto b = randn(rng, {2, 4, 3});
    a.set_requires_grad();
    b.set_requires_grad();
    expect_grad_ok([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b});

    auto x = randn(rng, {3, 5});
    auto w = randn(rng, {4, 5});
    auto bias = randn(rng, {4});
    x.set_requires_grad();
    w.set_requires_grad();
    bias.set_requires_grad();
    expect_grad_ok([&] {
        auto y = linear(x, w, bias);
        return sum(mul(y, y));
    }, {x, w, bias});

    auto xi = randn(rng, {2, 2, 5, 5});
    auto wi = randn(rng, {3, 2, 3, 3});
    auto bi = randn(rng, {3});
    xi.set_requires_grad();
    wi.set_requires_grad();
    bi.set_requires_grad();
    expect_grad_ok([&] {
        auto y = conv2d(xi, wi, bi, 1, 1);
        return sum(mul(y, y));
    }, {xi, wi, bi});
    expect_grad_ok([&] {
        auto y = conv2d(xi, wi, bi, 2, 0);
        return sum(mul(y, y));
    }, {xi, wi, bi});
}

TEST_CASE("tape semantics") {
    auto x = Tensor<double>::from_data({2}, {3.0, -1.0});
    x.set_requires_grad();

    SUBCASE("no active tape records nothing") {
        auto y = mul(x, x);
        CHECK(y.impl()->node == -1);
        CHECK(x.grad().empty());
    }

    SUBCASE("detach blocks the gradient") {
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        auto y = sum(mul(detach(x), x));
        tape.backward(y);
        REQUIRE(x.grad().size() == 2);
        // Only the tracked factor contributes: d/dx (c * x) = c = value(x).
        CHECK(x.grad()[0] == doctest::Approx(3.0));
        CHECK(x.grad()[1] == doctest::Approx(-1.0));
    }

    SUBCASE("maximum ties route the gradient to the first argument") {
        auto a = Tensor<double>::from_data({1}, {2.0});
        auto b = Tensor<double>::from_data({1}, {2.0});
        a.set_requires_grad();
        b.set_requires_grad();
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        tape.backward(sum(maximum(a, b)));
        CHECK(a.grad()[0] == 1.0);
        REQUIRE(b.grad().size() == 1);
        CHECK(b.grad()[0] == 0.0);
    }

    SUBCASE("gradients accumulate across reuses of one tensor") {
        Tape<double> tape;
        Tape<double>::Scope scope(tape);
        auto y = sum(add(mul(x, x), mul(x, x)));
        tape.backward(y);
        CHECK(x.grad()[0] == doctest::Approx(4.0 * 3.0));
        CHECK(x.grad()[1] == doctest::Approx(4.0 * -1.0));
    }

    SUBCASE("a consumed tape cannot run backward again") {
        Tape<double> tape;
        Tensor<double> y;
        {
            Tape<double>::Scope scope(tape);
            y = sum(mul(x, x));
        }
        tape.backward(y);
        CHECK_THROWS_AS(tape.backward(y), Error);
    }
}

TEST_CASE("fd_check reports large error for a wrong gradient") {
    // A leaf hidden behind detach gets an analytic gradient of zero while the
    // finite difference sees the true slope; fd_check must flag that.
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0});
    auto y = Tensor<double>::from_data({2}, {3.0, 4.0});
    x.set_requires_grad();
    y.set_requires_grad();
    FdResult r = fd_check([&] { return sum(mul(x, detach(y))); }, {x, y});
    CHECK(r.max_rel_err > 0.5);
}
