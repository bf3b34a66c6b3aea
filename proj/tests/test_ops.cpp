#include "doctest.h"

#include "webnn/gradcheck.hpp"
#include "webnn/ops.hpp"
#include "webnn/random.hpp"

#include <cmath>

using namespace webnn;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                             bool grad = true) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return Tensor<double>(std::move(shape), std::move(v), grad);
}

// Values bounded away from zero so a kink never sits inside the stencil.
Tensor<double> away_from_zero(Shape shape, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = rng.uniform(0.1, 1.0) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
    }
    return Tensor<double>(std::move(shape), std::move(v), true);
}

// Fixed random weights turn any tensor into a scalar with non-trivial gradient.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
    Rng rng(seed);
    return sum(y * random_tensor(y.shape(), rng, -1.0, 1.0, false));
}

} // namespace

TEST_CASE("matmul small examples") {
    Tensor<double> eye(Shape{2, 2}, {1, 0, 0, 1});
    Tensor<double> col(Shape{2, 1}, {3, 4});
    auto r = matmul(eye, col);
    CHECK(r.shape() == Shape{2, 1});
    CHECK(r.data()[0] == 3.0);
    CHECK(r.data()[1] == 4.0);

    Tensor<double> a(Shape{2, 2}, {1, 2, 3, 4});
    Tensor<double> b(Shape{2, 2}, {5, 6, 7, 8});
    auto p = matmul(a, b);
    CHECK(std::vector<double>(p.data().begin(), p.data().end()) ==
          std::vector<double>{19, 22, 43, 50});

    auto ones_w = Tensor<float>::full({3, 3, 3}, 1.0f);
    auto ones_x = Tensor<float>::full({3, 3, 1}, 1.0f);
    auto batched = matmul(ones_w, ones_x);
    CHECK(batched.shape() == Shape{3, 3, 1});
    for (float v : batched.data()) {
        CHECK(v == 3.0f);
    }
}

TEST_CASE("matmul matches a triple loop on random shapes") {
    Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
        const std::size_t batch = 1 + rng.below(3);
        const bool share_left = rng.below(2) == 0;
        Shape as = share_left ? Shape{m, k} : Shape{batch, m, k};
        auto a = random_tensor(as, rng, -1, 1, false);
        auto b = random_tensor({batch, k, n}, rng, -1, 1, false);
        auto c = matmul(a, b);
        REQUIRE(c.shape() == Shape{batch, m, n});
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    double ref = 0.0;
                    for (std::size_t t = 0; t < k; ++t) {
                        const double av = share_left ? a.at({i, t}) : a.at({s, i, t});
                        ref += av * b.at({s, t, j});
                    }
                    CHECK(std::abs(c.at({s, i, j}) - ref) <= 1e-12);
                }
            }
        }
    }
}

TEST_CASE("matmul reports both shapes on mismatch") {
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4,2)") != std::string::npos);
    }
}

TEST_CASE("activations") {
    Tensor<double> x(Shape{3}, {5.0, -1.0, 0.0});
    auto y = leaky_relu(x, 0.01);
    CHECK(y.data()[0] == 5.0);
    CHECK(y.data()[1] == doctest::Approx(-0.01));
    CHECK(y.data()[2] == 0.0);
    CHECK(sigmoid(Tensor<double>::scalar(0.0)).item() == 0.5);
    CHECK_THROWS_AS(leaky_relu(x, -0.1), ValidationError);

    auto z = Tensor<double>::scalar(0.0, true);
    sum(leaky_relu(z, 0.01)).backward();
    CHECK(z.grad()[0] == 1.0);

    auto big = sigmoid(Tensor<double>(Shape{2}, {-800.0, 800.0}));
    CHECK(big.data()[0] == 0.0);
    CHECK(big.data()[1] == 1.0);
}

TEST_CASE("softmax values and invariants") {
    auto u = softmax_last_axis(Tensor<double>::zeros({10}));
    for (double v : u.data()) {
        CHECK(v == doctest::Approx(0.1));
    }
    auto s = softmax_last_axis(Tensor<double>(Shape{2}, {std::log(2.0), 0.0}));
    CHECK(s.data()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.data()[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_tensor({4, 7}, rng, -30, 30, false);
        auto shifted = x + Tensor<double>::scalar(100.0);
        auto a = softmax_last_axis(x);
        auto b = softmax_last_axis(shifted);
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 7; ++c) {
                total += a.at({r, c});
                CHECK(std::abs(a.at({r, c}) - b.at({r, c})) <= 1e-12);
            }
            CHECK(std::abs(total - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("mean over an axis") {
    auto m = mean_over_axis(Tensor<double>(Shape{2, 2}, {1, 3, 5, 7}), 0);
    CHECK(m.shape() == Shape{2});
    CHECK(m.data()[0] == 3.0);
    CHECK(m.data()[1] == 5.0);
    CHECK(mean_over_axis(Tensor<double>::full({4, 3}, 1.25), 0).data()[2] == 1.25);
    CHECK(mean_over_axis(Tensor<double>(Shape{2}, {2.5, -2.5}), 0).item() == 0.0);
    CHECK_THROWS_AS(mean_over_axis(Tensor<double>::zeros({2, 2}), 2), DimensionError);
}

TEST_CASE("conv2d shapes and values") {
    CHECK(conv_output_extent(28, 3, 1) == 26);
    CHECK(conv_output_extent(28, 3, 2) == 13);
    CHECK_THROWS_AS(conv_output_extent(2, 3, 1), DimensionError);
    CHECK_THROWS_AS(conv_output_extent(5, 3, 0), ValidationError);

    auto ones = Tensor<double>::full({1, 1, 3, 3}, 1.0);
    auto y = conv2d(ones, ones, Tensor<double>::zeros({1}), 1);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 9.0);

    for (std::size_t h = 1; h <= 32; ++h) {
        for (std::size_t k = 1; k <= std::min<std::size_t>(h, 5); ++k) {
            for (std::size_t stride = 1; stride <= 3; ++stride) {
                CHECK(conv_output_extent(h, k, stride) == (h - k) / stride + 1);
            }
        }
    }
    auto x = Tensor<double>::zeros({2, 1, 11, 7});
    auto out = conv2d(x, Tensor<double>::zeros({3, 1, 3, 3}), Tensor<double>::zeros({3}), 2);
    CHECK(out.shape() == Shape{2, 3, 5, 3});
}

TEST_CASE("conv2d matches the reference library with stride 2") {
    std::vector<double> xv(50), kv(54);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        xv[i] = std::sin(0.3 * static_cast<double>(i));
    }
    for (std::size_t i = 0; i < kv.size(); ++i) {
        kv[i] = std::cos(0.7 * static_cast<double>(i));
    }
    auto y = conv2d(Tensor<double>(Shape{1, 2, 5, 5}, xv), Tensor<double>(Shape{3, 2, 3, 3}, kv),
                    Tensor<double>(Shape{3}, {0.1, -0.2, 0.3}), 2);
    const std::vector<double> expected = {
        -1.1422609710661038, 1.9408308627681765,  2.0461511745198999, -1.032216298447755,
        -1.6559985579042458, 1.3944532818946316,  1.9402617297378975, -1.0857067409104681,
        -1.3680896593520731, 1.6462726470139792,  2.6319520149286131, -0.33819560050684488};
    REQUIRE(y.shape() == Shape{1, 3, 2, 2});
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(y.data()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
}

TEST_CASE("binary cross-entropy with logits") {
    auto t1 = Tensor<double>::full({1}, 1.0);
    auto t0 = Tensor<double>::full({1}, 0.0);
    CHECK(bce_with_logits(Tensor<double>::scalar(0.0), t1).item() ==
          doctest::Approx(std::log(2.0)));
    CHECK(bce_with_logits(Tensor<double>::scalar(0.0), t0).item() ==
          doctest::Approx(std::log(2.0)));
    CHECK(bce_with_logits(Tensor<double>::scalar(20.0), t1).item() <= 1e-8);
    CHECK(std::isfinite(bce_with_logits(Tensor<float>::scalar(-500.0f),
                                        Tensor<float>::full({1}, 1.0f))
                            .item()));
    CHECK_THROWS_AS(bce_with_logits(Tensor<double>::scalar(0.0), Tensor<double>::full({1}, 0.5)),
                    ValidationError);
}

TEST_CASE("cross-entropy from logits") {
    const int three[] = {3};
    CHECK(cross_entropy_from_logits(Tensor<double>::zeros({1, 10}), three).item() ==
          doctest::Approx(std::log(10.0)));
    std::vector<double> hot(10, 0.0);
    hot[3] = 1000.0;
    CHECK(cross_entropy_from_logits(Tensor<double>(Shape{1, 10}, hot), three).item() <= 1e-12);
    const int zero[] = {0};
    CHECK(cross_entropy_from_logits(Tensor<double>(Shape{1, 2}, {std::log(2.0), 0.0}), zero)
              .item() == doctest::Approx(std::log(1.5)).epsilon(1e-12));

    std::vector<double> logits;
    for (int v = 0; v < 10; ++v) {
        logits.push_back(std::sin(v) * 3);
    }
    for (int v = 0; v < 10; ++v) {
        logits.push_back(std::cos(v) * 2);
    }
    const int labels[] = {4, 9};
    CHECK(cross_entropy_from_logits(Tensor<double>(Shape{2, 10}, logits), labels).item() ==
          doctest::Approx(5.7148564874522787).epsilon(1e-12));

    const int bad[] = {10};
    CHECK_THROWS_AS(cross_entropy_from_logits(Tensor<double>::zeros({1, 10}), bad),
                    ValidationError);
}

TEST_CASE("finite differences agree with every differentiable op") {
    Rng rng(11);
    const double h = 1e-5;
    auto check = [&](const char* name, std::function<Tensor<double>()> fn,
                     std::vector<Tensor<double>> params, double tol = 1e-4) {
        CAPTURE(name);
        auto r = finite_difference_gradcheck(fn, params, h);
        CHECK(r.max_relative_error <= tol);
    };

    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    check("add", [&] { return project(a + b, 1); }, {a, b});
    check("sub", [&] { return project(a - b, 2); }, {a, b});
    check("mul", [&] { return project(a * b, 3); }, {a, b});
    check("scale", [&] { return project(scale(a, 2.5), 4); }, {a});
    check("mean", [&] { return mean(a * a); }, {a});
    check("mean_over_axis", [&] { return project(mean_over_axis(a, 1), 5); }, {a});
    check("reshape", [&] { return project(reshape(a, {4, 6}), 6); }, {a});
    check("transpose", [&] { return project(transpose_last2(a), 7); }, {a});
    check("narrow", [&] { return project(narrow(a, 2, 1, 2), 8); }, {a});
    check("pad", [&] { return project(pad_axis(a, 2, 6), 9); }, {a});
    check("select", [&] { return project(select(a, 1, 2), 10); }, {a});
    check("stack", [&] { return project(stack<double>({a, a * b}, 1), 11); }, {a, b});

    auto w = random_tensor({3, 4, 4}, rng);
    auto x = random_tensor({2, 3, 4, 1}, rng);
    check("matmul broadcast", [&] { return project(matmul(w, x), 12); }, {w, x});

    auto z = away_from_zero({3, 5}, rng);
    check("leaky_relu", [&] { return project(leaky_relu(z, 0.01), 13); }, {z});
    check("sigmoid", [&] { return project(sigmoid(z), 14); }, {z});
    check("softmax", [&] { return project(softmax_last_axis(z), 15); }, {z});

    auto t = Tensor<double>(Shape{3, 5}, std::vector<double>{1, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 1, 0, 0, 1});
    check("bce", [&] { return bce_with_logits(z, t); }, {z});
    const int labels[] = {4, 0, 2};
    check("cross_entropy", [&] { return cross_entropy_from_logits(z, labels); }, {z});

    auto img = random_tensor({2, 2, 5, 5}, rng);
    auto kernel = random_tensor({3, 2, 3, 3}, rng);
    auto bias = random_tensor({3}, rng);
    check("conv2d", [&] { return project(conv2d(img, kernel, bias, 1), 16); },
          {img, kernel, bias}, 1e-5);
    check("conv2d stride 2", [&] { return project(conv2d(img, kernel, bias, 2), 17); },
          {img, kernel, bias}, 1e-5);
}
