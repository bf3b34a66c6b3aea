#include "doctest.h"

#include "webnn/gradcheck.hpp"
#include "webnn/ops.hpp"
#include "webnn/tensor.hpp"

#include <cmath>

using namespace webnn;

TEST_CASE("construction checks extents against data length") {
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), DimensionError);
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}, {}), DimensionError);
    Tensor<double> t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK_THROWS_AS(t.at({2, 0}), DimensionError);
    CHECK_THROWS_AS(t.dim(2), DimensionError);
    CHECK(Tensor<float>::dtype() == DType::f32);
    CHECK(std::string(dtype_name(Tensor<double>::dtype())) == "f64");
}

TEST_CASE("gradient of sum is all ones") {
    auto x = Tensor<double>::full({2, 3, 4}, 0.7, true);
    sum(x).backward();
    REQUIRE(x.grad().size() == 24);
    for (double g : x.grad()) {
        CHECK(g == 1.0);
    }
}

TEST_CASE("power rule through a product") {
    auto x = Tensor<double>::scalar(3.0, true);
    sum(x * x).backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("gradients accumulate over repeated use") {
    auto w = Tensor<double>(Shape{2}, {2.0, -1.0}, true);
    auto y = w * w;
    for (int i = 0; i < 3; ++i) {
        y = y * w; // w^5 overall
    }
    sum(y).backward();
    CHECK(w.grad()[0] == doctest::Approx(5 * std::pow(2.0, 4)));
    CHECK(w.grad()[1] == doctest::Approx(5.0));
}

TEST_CASE("backward rejects non-scalar roots and untracked roots") {
    auto x = Tensor<double>::full({2}, 1.0, true);
    CHECK_THROWS_AS((x * x).backward(), DimensionError);
    auto c = Tensor<double>::scalar(1.0);
    CHECK_THROWS_AS(c.backward(), ValidationError);
}

TEST_CASE("tape orders producers before consumers and visits each node once") {
    auto a = Tensor<double>::full({3}, 1.5, true);
    auto b = Tensor<double>::full({3}, -2.0, true);
    auto c = a * b;
    auto d = c + a;
    auto root = sum(d * c);
    GradientTape<double> tape(root);
    auto nodes = tape.nodes();
    REQUIRE(nodes.back() == root.node().get());
    std::vector<const detail::Node<double>*> seen;
    for (auto* node : nodes) {
        for (const auto& input : node->inputs) {
            bool before = false;
            for (const auto* s : seen) {
                before = before || s == input.get();
            }
            CHECK(before);
        }
        for (const auto* s : seen) {
            CHECK(s != node);
        }
        seen.push_back(node);
    }
}

TEST_CASE("graph is released after backward") {
    auto x = Tensor<double>::full({2}, 2.0, true);
    auto y = sum(x * x);
    y.backward();
    CHECK(y.node()->inputs.empty());
    CHECK_FALSE(static_cast<bool>(y.node()->backward));
}

TEST_CASE("no-grad guard stops recording") {
    auto x = Tensor<double>::full({2}, 2.0, true);
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        auto y = x * x;
        CHECK_FALSE(y.requires_grad());
        CHECK(y.node()->inputs.empty());
    }
    CHECK(grad_enabled());
    CHECK((x * x).requires_grad());
}

TEST_CASE("detach copies values without history") {
    auto x = Tensor<double>::full({2}, 2.0, true);
    auto y = (x * x).detach();
    CHECK_FALSE(y.requires_grad());
    CHECK(y.data()[0] == 4.0);
    y.mutable_data()[0] = 0.0;
    CHECK(x.data()[0] == 2.0);
}

TEST_CASE("zero_grad clears accumulated gradients") {
    auto x = Tensor<double>::full({2}, 1.0, true);
    sum(x).backward();
    CHECK(x.has_grad());
    x.zero_grad();
    CHECK_FALSE(x.has_grad());
}

TEST_CASE("gradcheck is exact for a quadratic") {
    auto p = Tensor<double>(Shape{3}, {0.3, -1.2, 2.0}, true);
    auto result = finite_difference_gradcheck([&] { return sum(p * p); }, {p}, 1e-5);
    CHECK(result.coordinates == 3);
    CHECK(result.max_relative_error <= 1e-8);
    CHECK(p.data()[1] == -1.2);
}

TEST_CASE("gradcheck validates its step") {
    auto p = Tensor<double>::full({1}, 1.0, true);
    auto fn = [&] { return sum(p); };
    CHECK_THROWS_AS(finite_difference_gradcheck(fn, {p}, 1e-2), ValidationError);
    CHECK_THROWS_AS(finite_difference_gradcheck(fn, {p}, 1e-9), ValidationError);
}
