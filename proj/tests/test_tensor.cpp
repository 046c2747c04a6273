#include <doctest.h>

#include "iagc/ops.hpp"
#include "iagc/tensor.hpp"

using namespace iagc;

TEST_CASE("create fills per init") {
    auto ones = create<double>({2, 2}, init_one());
    for (double v : ones.data()) CHECK(v == 1.0);
    CHECK(ones.shape() == Shape{2, 2});

    auto c = create<double>({3}, init_constant(0.5));
    for (double v : c.data()) CHECK(v == 0.5);

    auto z = create<float>({4, 1}, init_zero());
    for (float v : z.data()) CHECK(v == 0.0f);
}

TEST_CASE("seeded random inits are bit-reproducible") {
    auto a = create<float>({4}, init_uniform(0, 1, 7));
    auto b = create<float>({4}, init_uniform(0, 1, 7));
    CHECK(a.data() == b.data());
    auto c = create<float>({4}, init_uniform(0, 1, 8));
    CHECK(a.data() != c.data());

    auto n1 = create<double>({16}, init_normal(0, 1, 3));
    auto n2 = create<double>({16}, init_normal(0, 1, 3));
    CHECK(n1.data() == n2.data());
}

TEST_CASE("invalid shapes are rejected") {
    CHECK_THROWS_AS(create<float>({0}, init_zero()), InvalidShape);
    CHECK_THROWS_AS(create<float>({2, 0, 3}, init_zero()), InvalidShape);
    CHECK_THROWS_AS(create<float>({}, init_zero()), InvalidShape);
    CHECK_THROWS_AS(create<float>({2}, init_uniform(1, 1, 0)), Error);
    CHECK_THROWS_AS(TensorF::from_data({2, 2}, {1.f, 2.f}), ShapeError);
}

TEST_CASE("tensor invariants") {
    auto t = create<double>({2, 3, 4}, init_uniform(-1, 1, 5));
    CHECK(t.numel() == 24);
    CHECK(t.data().size() == numel(t.shape()));
    CHECK(t.at({1, 2, 3}) == t[23]);
    CHECK_THROWS_AS(t.at({2, 0, 0}), ShapeError);
}

TEST_CASE("backward computes d(x^2)/dx and d(ln x)/dx") {
    auto x = TensorD::from_data({1}, {3.0}, true);
    backward(sum_all(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(6.0));

    auto y = TensorD::from_data({1}, {2.0}, true);
    backward(sum_all(ln(y)));
    CHECK(y.grad()[0] == doctest::Approx(0.5));
}

TEST_CASE("shared subexpressions accumulate: d(x+x)/dx = 2") {
    auto x = TensorD::from_data({3}, {1.0, -2.0, 0.5}, true);
    backward(sum_all(add(x, x)));
    for (double g : x.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("repeated backward without reset accumulates leaf grads") {
    auto x = TensorD::from_data({1}, {3.0}, true);
    auto loss = sum_all(mul(x, x));
    backward(loss);
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(12.0));
    x.zero_grad();
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar loss") {
    auto x = TensorD::from_data({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);
}

TEST_CASE("NoGradGuard detaches results") {
    auto x = TensorD::from_data({2}, {1.0, 2.0}, true);
    NoGradGuard ng;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->inputs.empty());
}

TEST_CASE("param store keeps insertion order and unique names") {
    ParamStore<float> ps;
    ps.add("b", create<float>({2}, init_zero()));
    ps.add("a", create<float>({3}, init_one()));
    ps.add("c", create<float>({1}, init_zero()));
    std::vector<std::string> names;
    for (auto& [name, t] : ps) names.push_back(name);
    CHECK(names == std::vector<std::string>{"b", "a", "c"});
    CHECK(ps.total_elements() == 6);
    CHECK_THROWS_AS(ps.add("a", create<float>({1}, init_zero())), Error);
    CHECK_THROWS_AS(ps.get("nope"), Error);
    CHECK(ps.get("a").requires_grad());
}

TEST_CASE("op kinds are recorded on the graph") {
    auto x = TensorD::from_data({2}, {0.5, 0.7}, true);
    auto y = exp(mul(ln(x), x));
    auto kinds = collect_op_kinds(y);
    CHECK(kinds.count(OpKind::Exp) == 1);
    CHECK(kinds.count(OpKind::Ln) == 1);
    CHECK(kinds.count(OpKind::Mul) == 1);
    CHECK(kinds.count(OpKind::Leaf) == 1);
    CHECK(kinds.count(OpKind::Softmax) == 0);
}
