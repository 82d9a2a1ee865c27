#include <catch2/catch_amalgamated.hpp>

#include "ndo/ops.hpp"
#include "ndo/tape.hpp"
#include "ndo/tensor.hpp"

using namespace ndo;

TEST_CASE("tensor shape bookkeeping") {
    Tensor<float> t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.rank() == 3);
    CHECK(t.dim(1) == 3);
    for (auto v : t.data) CHECK(v == 0.0f);

    CHECK_THROWS_AS(Tensor<float>({2, 0, 3}), ShapeMismatch);
    CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}), ShapeMismatch);

    Tensor<float> u({2, 2}, {1.f, 2.f, 3.f, 4.f});
    CHECK(u.at2(1, 0) == 3.f);
}

TEST_CASE("tensor randn is deterministic per seed") {
    Rng a(42), b(42), c(43);
    auto t1 = Tensor<double>::randn({16}, a);
    auto t2 = Tensor<double>::randn({16}, b);
    auto t3 = Tensor<double>::randn({16}, c);
    CHECK(t1.data == t2.data);
    CHECK(t1.data != t3.data);
}

TEST_CASE("tape gradient of sum of squares") {
    // loss = sum(x*x), x = [1,2,3]  =>  dloss/dx = [2,4,6]
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}), true);
    auto loss = sum_all(tape, mul(tape, x, x));
    CHECK(tape.val(loss)[0] == Catch::Approx(14.0));
    tape.backward(loss);
    const auto& g = tape.grad(x);
    CHECK(g[0] == Catch::Approx(2.0));
    CHECK(g[1] == Catch::Approx(4.0));
    CHECK(g[2] == Catch::Approx(6.0));
}

TEST_CASE("tape is single-shot") {
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({2}, {1.f, 2.f}), true);
    auto loss = sum_all(tape, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), TapeConsumed);
}

TEST_CASE("backward requires a scalar") {
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({2}, {1.f, 2.f}), true);
    auto y = mul(tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), NotScalar);
}

TEST_CASE("disconnected leaf reports zero gradient") {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2}, {1.0, 2.0}), true);
    auto y = tape.leaf(Tensor<double>({2}, {3.0, 4.0}), true);
    auto loss = sum_all(tape, mul(tape, x, x));
    tape.backward(loss);
    const auto& gy = tape.grad(y);
    REQUIRE(gy.numel() == 2);
    CHECK(gy[0] == 0.0);
    CHECK(gy[1] == 0.0);
}

TEST_CASE("backward visits each node at most once") {
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({4}, {1.0, 2.0, 3.0, 4.0}), true);
    // Diamond: x used twice.
    auto a = mul(tape, x, x);
    auto b = add(tape, x, x);
    auto loss = sum_all(tape, mul(tape, a, b));
    tape.backward(loss);
    CHECK(tape.backward_visits() <= tape.size());
}

TEST_CASE("untracked subgraphs stay forward-only") {
    Tape<float> tape;
    auto x = tape.leaf(Tensor<float>({3}, {1.f, 2.f, 3.f}), false);
    auto y = mul(tape, x, x);
    CHECK_FALSE(tape.needs_grad(y));
    auto w = tape.leaf(Tensor<float>({3}, {1.f, 1.f, 1.f}), true);
    auto loss = sum_all(tape, mul(tape, y, w));
    tape.backward(loss);
    CHECK(tape.grad(w)[0] == 1.f);  // y values flow, y itself never pulled
    CHECK_FALSE(tape.has_grad(x));
}

TEST_CASE("gradient accumulates across multiple uses") {
    // loss = sum(x*x) + sum(x)  =>  d/dx_i = 2 x_i + 1
    Tape<double> tape;
    auto x = tape.leaf(Tensor<double>({2}, {3.0, -1.0}), true);
    auto loss = sum_all(tape, add(tape, mul(tape, x, x), x));
    tape.backward(loss);
    CHECK(tape.grad(x)[0] == Catch::Approx(7.0));
    CHECK(tape.grad(x)[1] == Catch::Approx(-1.0));
}
