#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ndo/grad_check.hpp"
#include "ndo/ops.hpp"

using namespace ndo;
using Id = Tape<double>::Id;

namespace {

Tensor<double> rand_t(Shape s, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return Tensor<double>::randn(std::move(s), rng, scale);
}

}  // namespace

// ---------------------------------------------------------------------------
// Hand-computed forward oracles
// ---------------------------------------------------------------------------

TEST_CASE("conv2d same padding matches hand computation") {
    // x = [[1,2],[3,4]], k = [[1,0,0],[0,2,0],[0,0,3]]:
    // out(r,c) = x(r-1,c-1) + 2 x(r,c) + 3 x(r+1,c+1), zero outside.
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    auto k = t.leaf(Tensor<double>({1, 1, 3, 3}, {1, 0, 0, 0, 2, 0, 0, 0, 3}));
    auto y = conv2d(t, x, k, Tape<double>::kNone, 1, Pad::same);
    REQUIRE(t.val(y).shape == Shape{1, 1, 2, 2});
    CHECK(t.val(y)[0] == Catch::Approx(14.0));  // 2*1 + 3*4
    CHECK(t.val(y)[1] == Catch::Approx(4.0));   // 2*2
    CHECK(t.val(y)[2] == Catch::Approx(6.0));   // 2*3
    CHECK(t.val(y)[3] == Catch::Approx(9.0));   // 1*1 + 2*4
}

TEST_CASE("conv2d valid stride 2 matches hand computation") {
    std::vector<double> xs(16);
    for (int i = 0; i < 16; ++i) xs[static_cast<size_t>(i)] = i + 1;
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({1, 1, 4, 4}, std::move(xs)));
    auto k = t.leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
    auto y = conv2d(t, x, k, Tape<double>::kNone, 2, Pad::valid);
    REQUIRE(t.val(y).shape == Shape{1, 1, 2, 2});
    CHECK(t.val(y)[0] == Catch::Approx(44.0));
    CHECK(t.val(y)[1] == Catch::Approx(64.0));
    CHECK(t.val(y)[2] == Catch::Approx(124.0));
    CHECK(t.val(y)[3] == Catch::Approx(144.0));
}

TEST_CASE("conv2d bias adds per filter") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({1, 1, 2, 2}, {1, 1, 1, 1}));
    auto k = t.leaf(Tensor<double>({2, 1, 1, 1}, {2, 3}));
    auto b = t.leaf(Tensor<double>({2}, {10, 20}));
    auto y = conv2d(t, x, k, b, 1, Pad::same);
    REQUIRE(t.val(y).shape == Shape{1, 2, 2, 2});
    CHECK(t.val(y).at4(0, 0, 0, 0) == Catch::Approx(12.0));
    CHECK(t.val(y).at4(0, 1, 1, 1) == Catch::Approx(23.0));
}

TEST_CASE("linear matches hand computation") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    auto w = t.leaf(Tensor<double>({3, 2}, {1, 0, 0, 1, 1, 1}));
    auto b = t.leaf(Tensor<double>({2}, {0.5, -0.5}));
    auto y = linear(t, x, w, b);
    CHECK(t.val(y).at2(0, 0) == Catch::Approx(1 + 3 + 0.5));
    CHECK(t.val(y).at2(0, 1) == Catch::Approx(2 + 3 - 0.5));
    CHECK(t.val(y).at2(1, 0) == Catch::Approx(4 + 6 + 0.5));
    CHECK(t.val(y).at2(1, 1) == Catch::Approx(5 + 6 - 0.5));
}

TEST_CASE("hard_sigmoid values and kink derivative") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({5}, {0.0, 0.75, -3.0, 0.25, 0.5}), true);
    auto y = hard_sigmoid(t, x);
    CHECK(t.val(y)[0] == Catch::Approx(0.5));
    CHECK(t.val(y)[1] == 1.0);
    CHECK(t.val(y)[2] == 0.0);
    CHECK(t.val(y)[3] == Catch::Approx(0.75));
    CHECK(t.val(y)[4] == 1.0);
    auto loss = sum_all(t, y);
    t.backward(loss);
    const auto& g = t.grad(x);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 1.0);
    CHECK(g[4] == 0.0);  // derivative at the kink is defined as 0
}

TEST_CASE("downsample2 of upsample2 is the identity") {
    auto x0 = rand_t({2, 3, 4, 6}, 7);
    Tape<double> t;
    auto x = t.leaf(x0);
    auto y = downsample2(t, upsample2(t, x));
    CHECK(t.val(y).shape == x0.shape);
    for (int64_t i = 0; i < x0.numel(); ++i) CHECK(t.val(y)[i] == x0[i]);
}

TEST_CASE("rotate_bilinear at zero angle is the identity") {
    auto x0 = rand_t({1, 2, 5, 7}, 9);
    Tape<double> t;
    auto x = t.leaf(x0);
    auto y = rotate_bilinear(t, x, 0.0, 2.0, 3.0);
    for (int64_t i = 0; i < x0.numel(); ++i) CHECK(t.val(y)[i] == Catch::Approx(x0[i]).margin(1e-12));
}

TEST_CASE("rotate_bilinear quarter turn moves a delta spike") {
    // 5x5 image, spike at (row 1, col 4), rotate by +90 degrees about center
    // (2,2).  out(p) = in(center + R(-theta)(p - center)): the output spike
    // appears where the back-rotation hits (1,4): p = center + R(theta) d,
    // d = (dx=2, dy=-1); R(90) (x,y) = (-y, x) => p = (2+1, 2+2) = row 4, col 3.
    Tensor<double> img({1, 1, 5, 5});
    img.at4(0, 0, 1, 4) = 1.0;
    Tape<double> t;
    auto x = t.leaf(img);
    auto y = rotate_bilinear(t, x, M_PI / 2, 2.0, 2.0);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            const double want = (r == 4 && c == 3) ? 1.0 : 0.0;
            CHECK(t.val(y).at4(0, 0, r, c) == Catch::Approx(want).margin(1e-9));
        }
}

// ---------------------------------------------------------------------------
// Adjoint identity for the transposed convolution
// ---------------------------------------------------------------------------

TEST_CASE("conv2d_transpose is the exact adjoint of conv2d") {
    for (int stride : {1, 2}) {
        const int n = 2, f = 3, c = 2, h = 4, w = 5, kh = 3, kw = 3;
        auto u0 = rand_t({n, f, h * stride, w * stride}, 11);
        auto v0 = rand_t({n, c, h, w}, 12);
        auto k0 = rand_t({c, f, kh, kw}, 13);

        Tape<double> t;
        auto u = t.leaf(u0);
        auto v = t.leaf(v0);
        auto k = t.leaf(k0);
        auto au = conv2d(t, u, k, Tape<double>::kNone, stride, Pad::same);   // [n,c,h,w]
        auto btv = conv2d_transpose(t, v, k, stride);                        // [n,f,h*s,w*s]
        REQUIRE(t.val(au).shape == v0.shape);
        REQUIRE(t.val(btv).shape == u0.shape);
        double lhs = 0, rhs = 0;
        for (int64_t i = 0; i < v0.numel(); ++i) lhs += t.val(au)[i] * v0[i];
        for (int64_t i = 0; i < u0.numel(); ++i) rhs += t.val(btv)[i] * u0[i];
        CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks (double precision, h = 1e-6)
// ---------------------------------------------------------------------------

TEST_CASE("grad check: conv2d wrt input, kernel and bias") {
    const auto x0 = rand_t({2, 2, 4, 4}, 21);
    const auto k0 = rand_t({3, 2, 3, 3}, 22);
    const auto b0 = rand_t({3}, 23);

    auto r1 = grad_check(
        [&](Tape<double>& t, Id x) {
            auto k = t.leaf(k0);
            auto b = t.leaf(b0);
            return sum_all(t, mul(t, conv2d(t, x, k, b, 1, Pad::same), t.leaf(rand_t({2, 3, 4, 4}, 24))));
        },
        x0);
    CHECK(r1.max_err < 1e-6);

    auto r2 = grad_check(
        [&](Tape<double>& t, Id k) {
            auto x = t.leaf(x0);
            auto b = t.leaf(b0);
            return sum_all(t, mul(t, conv2d(t, x, k, b, 2, Pad::same), t.leaf(rand_t({2, 3, 2, 2}, 25))));
        },
        k0);
    CHECK(r2.max_err < 1e-6);

    auto r3 = grad_check(
        [&](Tape<double>& t, Id b) {
            auto x = t.leaf(x0);
            auto k = t.leaf(k0);
            return sum_all(t, mul(t, conv2d(t, x, k, b, 1, Pad::valid), t.leaf(rand_t({2, 3, 2, 2}, 26))));
        },
        b0);
    CHECK(r3.max_err < 1e-6);
}

TEST_CASE("grad check: conv2d_transpose wrt input and kernel") {
    const auto x0 = rand_t({1, 2, 3, 4}, 31);
    const auto k0 = rand_t({2, 3, 3, 3}, 32);
    for (int stride : {1, 2}) {
        auto w0 = rand_t({1, 3, 3 * stride, 4 * stride}, 33 + stride);
        auto r1 = grad_check(
            [&](Tape<double>& t, Id x) {
                return sum_all(t, mul(t, conv2d_transpose(t, x, t.leaf(k0), stride), t.leaf(w0)));
            },
            x0);
        CHECK(r1.max_err < 1e-6);
        auto r2 = grad_check(
            [&](Tape<double>& t, Id k) {
                return sum_all(t, mul(t, conv2d_transpose(t, t.leaf(x0), k, stride), t.leaf(w0)));
            },
            k0);
        CHECK(r2.max_err < 1e-6);
    }
}

TEST_CASE("grad check: elementwise and reductions") {
    const auto x0 = rand_t({2, 6}, 41);

    CHECK(grad_check([](Tape<double>& t, Id x) { return mean_all(t, mul(t, x, x)); }, x0).max_err < 1e-6);
    CHECK(grad_check([](Tape<double>& t, Id x) { return sum_all(t, sigmoid(t, x)); }, x0).max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  auto y = t.leaf(rand_t({2, 6}, 42));
                  return sum_all(t, mul(t, sub(t, x, y), sub(t, x, y)));
              },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  auto d = t.leaf(Tensor<double>::full({2, 6}, 2.5));
                  return sum_all(t, divide(t, x, d));
              },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  auto d = t.leaf(rand_t({2, 6}, 43));
                  return sum_all(t, divide(t, d, add_const(t, mul(t, x, x), 1.0)));
              },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check([](Tape<double>& t, Id x) { return sum_all(t, scale(t, x, -3.5)); }, x0).max_err < 1e-6);
}

TEST_CASE("grad check: kink activations away from their kinks") {
    // Values kept at distance >= 0.1 from 0 and +-0.5 so central differences
    // with h = 1e-6 never straddle a kink.
    Tensor<double> x0({6}, {-0.8, -0.35, -0.15, 0.2, 0.4, 0.9});
    CHECK(grad_check([](Tape<double>& t, Id x) { return sum_all(t, relu(t, x)); }, x0).max_err < 1e-6);
    CHECK(grad_check([](Tape<double>& t, Id x) { return sum_all(t, leaky_relu(t, x, 0.1)); }, x0).max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  auto w = t.leaf(Tensor<double>({6}, {1, 2, 3, 4, 5, 6}));
                  return sum_all(t, mul(t, hard_sigmoid(t, x), w));
              },
              x0)
              .max_err < 1e-6);
}

TEST_CASE("grad check: shape ops") {
    const auto x0 = rand_t({2, 4, 4, 4}, 51);
    const auto w0 = rand_t({2, 2, 4, 4}, 52);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) { return sum_all(t, mul(t, slice_channels(t, x, 1, 3), t.leaf(w0))); },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  auto other = t.leaf(rand_t({2, 1, 4, 4}, 53));
                  auto y = concat_channels(t, slice_channels(t, x, 0, 2), other);
                  return sum_all(t, mul(t, y, t.leaf(rand_t({2, 3, 4, 4}, 54))));
              },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  return sum_all(t, mul(t, upsample2(t, x), t.leaf(rand_t({2, 4, 8, 8}, 55))));
              },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  return sum_all(t, mul(t, downsample2(t, x), t.leaf(rand_t({2, 4, 2, 2}, 56))));
              },
              x0)
              .max_err < 1e-6);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  auto y = reshape(t, x, {2, 64});
                  return sum_all(t, mul(t, y, t.leaf(rand_t({2, 64}, 57))));
              },
              x0)
              .max_err < 1e-6);
}

TEST_CASE("grad check: batch-broadcast add") {
    const auto b0 = rand_t({3, 2}, 61);
    CHECK(grad_check(
              [&](Tape<double>& t, Id b) {
                  auto x = t.leaf(rand_t({4, 3, 2}, 62));
                  auto w = t.leaf(rand_t({4, 3, 2}, 63));
                  return sum_all(t, mul(t, add(t, x, b), w));
              },
              b0)
              .max_err < 1e-6);
}

TEST_CASE("grad check: rotate_bilinear") {
    const auto x0 = rand_t({1, 1, 8, 8}, 71);
    const auto w0 = rand_t({1, 1, 8, 8}, 72);
    CHECK(grad_check(
              [&](Tape<double>& t, Id x) {
                  return sum_all(t, mul(t, rotate_bilinear(t, x, 0.31, 3.5, 3.5), t.leaf(w0)));
              },
              x0)
              .max_err < 1e-6);
}

TEST_CASE("grad check: linear layer") {
    const auto x0 = rand_t({3, 4}, 81);
    const auto w0 = rand_t({4, 5}, 82);
    const auto b0 = rand_t({5}, 83);
    const auto m0 = rand_t({3, 5}, 84);
    CHECK(grad_check([&](Tape<double>& t, Id x) { return sum_all(t, mul(t, linear(t, x, t.leaf(w0), t.leaf(b0)), t.leaf(m0))); }, x0).max_err < 1e-6);
    CHECK(grad_check([&](Tape<double>& t, Id w) { return sum_all(t, mul(t, linear(t, t.leaf(x0), w, t.leaf(b0)), t.leaf(m0))); }, w0).max_err < 1e-6);
    CHECK(grad_check([&](Tape<double>& t, Id b) { return sum_all(t, mul(t, linear(t, t.leaf(x0), t.leaf(w0), b), t.leaf(m0))); }, b0).max_err < 1e-6);
}

TEST_CASE("grad check: composite convnet-like graph") {
    const auto x0 = rand_t({1, 1, 8, 8}, 91, 0.5);
    const auto k1 = rand_t({4, 1, 3, 3}, 92, 0.5);
    const auto b1 = rand_t({4}, 93, 0.1);
    const auto k2 = rand_t({2, 4, 3, 3}, 94, 0.5);
    const auto b2 = rand_t({2}, 95, 0.1);
    auto graph = [&](Tape<double>& t, Id x) {
        auto h1 = leaky_relu(t, conv2d(t, x, t.leaf(k1), t.leaf(b1), 1, Pad::same), 0.1);
        auto h2 = downsample2(t, h1);
        auto h3 = sigmoid(t, conv2d(t, h2, t.leaf(k2), t.leaf(b2), 1, Pad::same));
        return mean_all(t, mul(t, h3, h3));
    };
    CHECK(grad_check(graph, x0).max_err < 1e-6);
}

TEST_CASE("backward is bitwise deterministic") {
    const auto x0 = rand_t({2, 2, 8, 8}, 101);
    const auto k0 = rand_t({3, 2, 3, 3}, 102);
    auto run = [&]() {
        Tape<float> t;
        auto x = t.leaf(x0.cast<float>(), true);
        auto k = t.leaf(k0.cast<float>(), true);
        auto y = conv2d(t, x, k, Tape<float>::kNone, 1, Pad::same);
        auto loss = mean_all(t, mul(t, y, y));
        t.backward(loss);
        auto g = t.grad(x).data;
        auto gk = t.grad(k).data;
        g.insert(g.end(), gk.begin(), gk.end());
        return g;
    };
    CHECK(run() == run());
}

TEST_CASE("shape errors are reported") {
    Tape<float> t;
    auto x = t.leaf(Tensor<float>({1, 2, 4, 4}));
    auto k = t.leaf(Tensor<float>({3, 5, 3, 3}));  // wrong in-channels
    CHECK_THROWS_AS(conv2d(t, x, k, Tape<float>::kNone, 1, Pad::same), ShapeMismatch);

    auto a = t.leaf(Tensor<float>({2, 3}));
    auto b = t.leaf(Tensor<float>({3, 2}));
    CHECK_THROWS_AS(mul(t, a, b), ShapeMismatch);
    CHECK_THROWS_AS(slice_channels(t, x, 1, 4), ShapeMismatch);

    auto odd = t.leaf(Tensor<float>({1, 1, 3, 4}));
    CHECK_THROWS_AS(downsample2(t, odd), ShapeMismatch);

    auto small = t.leaf(Tensor<float>({1, 1, 2, 2}));
    auto bigk = t.leaf(Tensor<float>({1, 1, 3, 3}));
    CHECK_THROWS_AS(conv2d(t, small, bigk, Tape<float>::kNone, 1, Pad::valid), ShapeMismatch);
}
