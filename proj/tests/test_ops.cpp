#include <doctest.h>

#include <cmath>

#include "iagc/ops.hpp"

using namespace iagc;

TEST_CASE("elementwise dispatcher covers the spec kinds") {
    auto z = TensorD::from_data({1}, {0.0});
    CHECK(elementwise(EwiseSpec{OpKind::Sigmoid}, z)[0] == doctest::Approx(0.5));

    auto one = TensorD::from_data({1}, {1.0});
    CHECK(elementwise(EwiseSpec{OpKind::Ln}, one)[0] == doctest::Approx(0.0));

    auto a = TensorD::from_data({2}, {2.0, 3.0});
    auto b = TensorD::from_data({2}, {4.0, 5.0});
    auto m = elementwise(EwiseSpec{OpKind::Mul}, a, &b);
    CHECK(m[0] == doctest::Approx(8.0));
    CHECK(m[1] == doctest::Approx(15.0));

    CHECK(elementwise(EwiseSpec{OpKind::Scale, 2.5}, a)[1] == doctest::Approx(7.5));
    CHECK(elementwise(EwiseSpec{OpKind::PowerInt, 0, 3}, a)[0] == doctest::Approx(8.0));
    CHECK_THROWS_AS(elementwise(EwiseSpec{OpKind::Add}, a), Error);  // missing b
}

TEST_CASE("binary shape rules") {
    auto a = TensorD::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    auto s = TensorD::from_data({1}, {10.0});
    auto suffix = TensorD::from_data({3}, {1, 10, 100});
    auto chan = TensorD::from_data({2, 1}, {1, 2});

    auto as = add(a, s);
    CHECK(as[0] == 11.0);
    CHECK(as[5] == 16.0);

    auto asuf = add(a, suffix);
    CHECK(asuf[0] == 2.0);
    CHECK(asuf[5] == 106.0);

    auto ach = mul(a, chan);  // [2,1] broadcast across last dim
    CHECK(ach[0] == 1.0);
    CHECK(ach[3] == 8.0);

    auto bad = TensorD::from_data({4}, {1, 2, 3, 4});
    CHECK_THROWS_AS(add(a, bad), ShapeError);
    CHECK_THROWS_AS(add(suffix, a), ShapeError);  // b larger than a
}

TEST_CASE("unary domains") {
    auto neg = TensorD::from_data({2}, {1.0, -0.5});
    CHECK_THROWS_AS(ln(neg), DomainError);
    CHECK_THROWS_AS(sqrt(neg), DomainError);
    auto zero = TensorD::from_data({1}, {0.0});
    CHECK_THROWS_AS(ln(zero), DomainError);
    CHECK_THROWS_AS(power_int(zero, -1), DomainError);
    CHECK(power_int(TensorD::from_data({1}, {2.0}), -2)[0] == doctest::Approx(0.25));
}

TEST_CASE("clamp gradient dies in the clamped region") {
    auto x = TensorD::from_data({3}, {-0.5, 0.5, 1.5}, true);
    backward(sum_all(clamp(x, 0.0, 1.0)));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0);
    CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("matmul: identity, hand product, errors") {
    auto I2 = TensorD::from_data({2, 2}, {1, 0, 0, 1});
    auto x = TensorD::from_data({2, 2}, {3, -1, 2, 7});
    CHECK(matmul(I2, x).data() == x.data());

    auto a = TensorD::from_data({2, 2}, {1, 2, 3, 4});
    auto ones = TensorD::from_data({2, 1}, {1, 1});
    auto c = matmul(a, ones);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c[0] == 3.0);
    CHECK(c[1] == 7.0);

    CHECK_THROWS_AS(matmul(a, TensorD::from_data({3, 1}, {1, 1, 1})), ShapeError);
    // batched x shared weight
    auto batched = TensorD::from_data({2, 1, 2}, {1, 2, 3, 4});
    auto w = TensorD::from_data({2, 2}, {1, 0, 0, 1});
    auto y = matmul(batched, w);
    CHECK(y.shape() == Shape{2, 1, 2});
    CHECK(y.data() == batched.data());
    // batch dims must agree when b is batched
    auto b3 = TensorD::from_data({3, 2, 2}, std::vector<double>(12, 1.0));
    CHECK_THROWS_AS(matmul(batched, b3), ShapeError);
}

TEST_CASE("conv2d: identity kernel and hand convolution") {
    // 1x1 kernel, weight 1, bias 0 is the identity map
    auto x = TensorD::from_data({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
    auto w1 = TensorD::from_data({1, 1, 1, 1}, {1.0});
    auto b0 = TensorD::from_data({1}, {0.0});
    auto y = conv2d(x, w1, b0, 1, 0);
    CHECK(y.data() == x.data());

    // 3x3 all-ones kernel on 3x3 all-ones input, pad 1: center sees all 9
    auto xi = create<double>({1, 1, 3, 3}, init_one());
    auto w9 = create<double>({1, 1, 3, 3}, init_one());
    auto yc = conv2d(xi, w9, b0, 1, 1);
    CHECK(yc.shape() == Shape{1, 1, 3, 3});
    CHECK(yc.at({0, 0, 1, 1}) == doctest::Approx(9.0));
    CHECK(yc.at({0, 0, 0, 0}) == doctest::Approx(4.0));  // corner sees 4

    // channel mismatch
    auto w_bad = create<double>({1, 2, 3, 3}, init_one());
    CHECK_THROWS_AS(conv2d(xi, w_bad, b0, 1, 1), ShapeError);
    // even kernel
    auto w_even = create<double>({1, 1, 2, 2}, init_one());
    CHECK_THROWS_AS(conv2d(xi, w_even, b0, 1, 0), ShapeError);
    // bias length
    auto b2 = create<double>({2}, init_zero());
    CHECK_THROWS_AS(conv2d(xi, w9, b2, 1, 1), ShapeError);
}

TEST_CASE("conv2d stride 2 geometry") {
    auto x = create<double>({1, 1, 5, 5}, init_uniform(-1, 1, 3));
    auto w = create<double>({1, 1, 3, 3}, init_uniform(-1, 1, 4));
    auto b = create<double>({1}, init_zero());
    auto y = conv2d(x, w, b, 2, 1);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
}

TEST_CASE("softmax oracle values and invariants") {
    auto z = softmax(TensorD::from_data({2}, {0.0, 0.0}), -1);
    CHECK(z[0] == doctest::Approx(0.5));
    CHECK(z[1] == doctest::Approx(0.5));

    auto s = softmax(TensorD::from_data({3}, {1, 2, 3}), -1);
    CHECK(s[0] == doctest::Approx(0.09003).epsilon(1e-3));
    CHECK(s[1] == doctest::Approx(0.24473).epsilon(1e-3));
    CHECK(s[2] == doctest::Approx(0.66524).epsilon(1e-3));

    // shift invariance
    auto a = create<double>({4, 7}, init_uniform(-3, 3, 9));
    std::vector<double> shifted = a.data();
    for (auto& v : shifted) v += 17.5;
    auto sa = softmax(a, -1);
    auto sb = softmax(TensorD::from_data({4, 7}, shifted), -1);
    for (std::size_t i = 0; i < sa.numel(); ++i)
        CHECK(sa[i] == doctest::Approx(sb[i]).epsilon(1e-9));

    // rows sum to one, entries in (0,1)
    for (std::size_t r = 0; r < 4; ++r) {
        double sum = 0;
        for (std::size_t j = 0; j < 7; ++j) {
            const double v = sa.at({r, j});
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }

    // non-last axis
    auto ax0 = softmax(TensorD::from_data({2, 2}, {0, 1, 0, 1}), 0);
    CHECK(ax0.at({0, 0}) == doctest::Approx(0.5));
    CHECK(ax0.at({1, 1}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(softmax(a, 5), ShapeError);
}

TEST_CASE("float softmax rows sum to 1 within 1e-6") {
    auto a = create<float>({64, 256}, init_uniform(-8, 8, 21));
    auto s = softmax(a, -1);
    for (std::size_t r = 0; r < 64; ++r) {
        double sum = 0;
        for (std::size_t j = 0; j < 256; ++j) sum += s.at({r, j});
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("layernorm edge cases") {
    auto gain = create<double>({4}, init_one());
    auto offset = create<double>({4}, init_zero());
    auto constant = create<double>({2, 4}, init_constant(3.7));
    auto y = layernorm(constant, gain, offset);
    for (double v : y.data()) CHECK(std::abs(v) < 1e-3);

    auto zero_gain = create<double>({4}, init_zero());
    auto off = TensorD::from_data({4}, {1, 2, 3, 4});
    auto x = create<double>({3, 4}, init_uniform(-1, 1, 2));
    auto y2 = layernorm(x, zero_gain, off);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 4; ++j) CHECK(y2.at({r, j}) == doctest::Approx(off[j]));

    CHECK_THROWS_AS(layernorm(x, create<double>({3}, init_one()), offset), ShapeError);

    // normalized rows: mean 0, var 1 before affine
    auto xr = create<double>({5, 8}, init_uniform(-2, 2, 11));
    auto g1 = create<double>({8}, init_one());
    auto o0 = create<double>({8}, init_zero());
    auto yn = layernorm(xr, g1, o0);
    for (std::size_t r = 0; r < 5; ++r) {
        double mean = 0, var = 0;
        for (std::size_t j = 0; j < 8; ++j) mean += yn.at({r, j});
        mean /= 8;
        for (std::size_t j = 0; j < 8; ++j) var += (yn.at({r, j}) - mean) * (yn.at({r, j}) - mean);
        var /= 8;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("global average pool") {
    auto c = create<double>({2, 3, 4, 4}, init_constant(0.75));
    auto p = global_avg_pool(c);
    CHECK(p.shape() == Shape{2, 3});
    for (double v : p.data()) CHECK(v == doctest::Approx(0.75));

    auto x = TensorD::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(global_avg_pool(x)[0] == doctest::Approx(2.5));

    // gradient distributes 1/(H*W)
    auto xg = TensorD::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
    backward(sum_all(global_avg_pool(xg)));
    for (double g : xg.grad()) CHECK(g == doctest::Approx(0.25));

    CHECK_THROWS_AS(global_avg_pool(TensorD::from_data({2, 2}, {1, 2, 3, 4})), ShapeError);
}

TEST_CASE("gather, reshape, permute") {
    auto a = TensorD::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    auto t = transpose_last2(a);
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at({0, 1}) == 4.0);
    CHECK(t.at({2, 0}) == 3.0);
    // permute round trip
    auto back = transpose_last2(t);
    CHECK(back.data() == a.data());

    CHECK_THROWS_AS(reshape(a, {4}), ShapeError);
    CHECK_THROWS_AS(permute(a, {0, 0}), ShapeError);
    CHECK_THROWS_AS(gather(a, std::vector<std::size_t>{9}, Shape{1}), ShapeError);

    // gather with repeated indices scatter-adds in backward
    auto x = TensorD::from_data({2}, {5.0, 7.0}, true);
    auto g = gather(x, std::vector<std::size_t>{0, 0, 1}, Shape{3});
    backward(sum_all(g));
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(1.0));
}

TEST_CASE("sum_all and mean_all") {
    auto a = TensorD::from_data({2, 2}, {1, 2, 3, 4});
    CHECK(sum_all(a)[0] == doctest::Approx(10.0));
    CHECK(mean_all(a)[0] == doctest::Approx(2.5));
}
