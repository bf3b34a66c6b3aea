#include "doctest.h"

#include "webnn/data.hpp"
#include "webnn/models.hpp"
#include "webnn/training.hpp"

#include <cmath>
#include <limits>

using namespace webnn;

namespace {

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
    return std::vector<T>(t.data().begin(), t.data().end());
}

Dataset<double> toy_titanic(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(n * 8);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double score = 0.0;
        for (std::size_t k = 0; k < 8; ++k) {
            x[i * 8 + k] = rng.uniform(-1.5, 1.5);
            score += (k % 2 == 0 ? 1.0 : -0.5) * x[i * 8 + k];
        }
        y[i] = score > 0.0 ? 1 : 0;
    }
    return Dataset<double>{Tensor<double>(Shape{n, 8}, x), y};
}

} // namespace

TEST_CASE("adamw update examples") {
    AdamWOptions plain{0.9, 0.999, 1e-8, 0.0};
    std::vector<double> p = {1.0};
    std::vector<double> g = {1.0};
    AdamWState<double> s;
    adamw_step<double>(p, g, s, 0.1, plain);
    CHECK(s.step == 1);
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-8));

    AdamWOptions decay{0.9, 0.999, 1e-8, 0.01};
    std::vector<double> q = {1.0};
    AdamWState<double> s2;
    adamw_step<double>(q, g, s2, 0.1, decay);
    CHECK(q[0] == doctest::Approx(0.899).epsilon(1e-8));
}

TEST_CASE("zero gradient") {
    std::vector<double> p = {0.5, -2.0, 3.0};
    const std::vector<double> zero(3, 0.0);
    AdamWState<double> s;
    adamw_step<double>(p, zero, s, 0.1, AdamWOptions{0.9, 0.999, 1e-8, 0.0});
    CHECK(p == std::vector<double>{0.5, -2.0, 3.0});

    const double lr = 0.1, wd = 0.01;
    std::vector<double> q = {0.5, -2.0, 3.0};
    AdamWState<double> s2;
    for (int k = 0; k < 3; ++k) {
        std::vector<double> before = q;
        adamw_step<double>(q, zero, s2, lr, AdamWOptions{0.9, 0.999, 1e-8, wd});
        for (std::size_t i = 0; i < q.size(); ++i) {
            CHECK(q[i] == doctest::Approx(before[i] * (1.0 - lr * wd)).epsilon(1e-15));
        }
    }
}

TEST_CASE("without decay the update is plain Adam") {
    Rng rng(1);
    std::vector<double> p(5), ref(5), m(5, 0.0), v(5, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
        p[i] = ref[i] = rng.uniform(-1, 1);
    }
    AdamWState<double> s;
    for (int t = 1; t <= 6; ++t) {
        std::vector<double> g(5);
        for (auto& x : g) {
            x = rng.uniform(-2, 2);
        }
        adamw_step<double>(p, g, s, 0.05, AdamWOptions{0.9, 0.999, 1e-8, 0.0});
        for (std::size_t i = 0; i < 5; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, t));
            const double vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-14));
        CHECK(s.v[i] >= 0.0);
    }
}

TEST_CASE("adamw matches the reference optimizer over three steps") {
    std::vector<double> p = {1.0, -0.5, 2.0};
    AdamWState<double> s;
    const std::vector<std::vector<double>> grads = {
        {1.0, 0.2, -3.0}, {-0.5, 0.2, 1.0}, {0.25, -4.0, 0.0}};
    for (const auto& g : grads) {
        adamw_step<double>(p, g, s, 0.1, AdamWOptions{0.9, 0.999, 1e-8, 0.01});
    }
    const std::vector<double> expected = {0.83655291576647672, -0.63992737208093453,
                                          2.164724944265112};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(p[i] == doctest::Approx(expected[i]).epsilon(1e-13));
    }
}

TEST_CASE("non-finite gradients abort the step") {
    std::vector<float> p = {1.0f, 2.0f};
    std::vector<float> g = {0.0f, std::numeric_limits<float>::quiet_NaN()};
    AdamWState<float> s;
    CHECK_THROWS_AS(adamw_step<float>(p, g, s, 0.1, AdamWOptions{}), TrainingError);
    CHECK(p == std::vector<float>{1.0f, 2.0f});
    g[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(adamw_step<float>(p, g, s, 0.1, AdamWOptions{}), TrainingError);
}

TEST_CASE("exponential schedule") {
    CHECK(exponential_lr(0.01, 0.9, 0) == 0.01);
    CHECK(exponential_lr(0.01, 0.9, 2) == doctest::Approx(0.0081).epsilon(1e-12));
    CHECK(exponential_lr(0.003, 1.0, 17) == 0.003);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto mutate) {
        TrainConfig t;
        mutate(t);
        CHECK_THROWS_AS(t.validate(), ValidationError);
    };
    bad([](TrainConfig& t) { t.epochs = 0; });
    bad([](TrainConfig& t) { t.batch_size = 0; });
    bad([](TrainConfig& t) { t.lr = 0.0; });
    bad([](TrainConfig& t) { t.scheduler_gamma = 0.0; });
    bad([](TrainConfig& t) { t.scheduler_gamma = 1.5; });
    bad([](TrainConfig& t) { t.clip_norm = -1.0; });
}

TEST_CASE("a zero learning rate leaves parameters bit-identical") {
    TitanicModel<float> model(TitanicModel<float>::paper_config(), 3);
    const Dataset<double> d = toy_titanic(40, 2);
    Dataset<float> data{Tensor<float>(d.inputs.shape(),
                                      std::vector<float>(d.inputs.data().begin(),
                                                         d.inputs.data().end())),
                        d.labels};
    const auto w0 = values(model.web().weight);
    const auto b0 = values(model.web().bias);
    TrainConfig config;
    config.batch_size = 16;
    AdamW<float> opt(model.parameters(), AdamWOptions{0.9, 0.999, 1e-8, 0.001});
    Rng rng(1);
    train_epoch(model, data, config, opt, 0.0, rng);
    CHECK(values(model.web().weight) == w0);
    CHECK(values(model.web().bias) == b0);
}

TEST_CASE("training is reproducible for a fixed seed") {
    const Dataset<double> train = toy_titanic(50, 4);
    const Dataset<double> val = toy_titanic(20, 5);
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 16;
    config.seed = 9;
    auto run = [&] {
        TitanicModel<double> model(WebConfig(10, 8, 1, 4), config.seed);
        return fit(model, train, val, config);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
        CHECK(a[e].epoch == e + 1);
        CHECK(a[e].lr == b[e].lr);
        CHECK(a[e].train_loss == b[e].train_loss);
        CHECK(a[e].val_loss == b[e].val_loss);
        CHECK(a[e].train_accuracy == b[e].train_accuracy);
        CHECK(a[e].val_accuracy == b[e].val_accuracy);
        CHECK(a[e].val_accuracy >= 0.0);
        CHECK(a[e].val_accuracy <= 1.0);
    }
    CHECK(a[2].lr == doctest::Approx(0.01 * 0.81));
}

TEST_CASE("evaluation is pure and rejects empty splits") {
    TitanicModel<double> model(WebConfig(10, 8, 1, 4), 1);
    const Dataset<double> data = toy_titanic(30, 6);
    const auto w0 = values(model.web().weight);
    const SplitMetrics a = evaluate(model, data, LossKind::bce, 7);
    const SplitMetrics b = evaluate(model, data, LossKind::bce);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
    CHECK(a.accuracy == b.accuracy);
    CHECK(evaluate(model, data, LossKind::bce).loss == b.loss);
    CHECK(values(model.web().weight) == w0);
    CHECK_THROWS_AS(evaluate(model, Dataset<double>{}, LossKind::bce), ValidationError);
}

TEST_CASE("a constant model scores the majority fraction") {
    const WebConfig c = TitanicModel<double>::paper_config();
    TitanicModel<double> model(c, WebParams<double>{Tensor<double>::zeros({15, 15, 15}),
                                                    Tensor<double>::full({15, 15}, -1.0)});
    const Dataset<double> data = toy_titanic(64, 3);
    std::size_t zeros = 0;
    for (int y : data.labels) {
        zeros += y == 0 ? 1 : 0;
    }
    CHECK(evaluate(model, data, LossKind::bce).accuracy ==
          doctest::Approx(static_cast<double>(zeros) / 64.0));
}

TEST_CASE("two separable points are memorised") {
    Dataset<double> data{Tensor<double>(Shape{2, 8}, {1, 1, 1, 1, 1, 1, 1, 1,  //
                                                      -1, -1, -1, -1, -1, -1, -1, -1}),
                         {1, 0}};
    TitanicModel<double> model(WebConfig(10, 8, 1, 3), 2);
    TrainConfig config;
    config.epochs = 30;
    config.batch_size = 2;
    config.lr = 0.01;
    config.weight_decay = 0.0;
    config.scheduler_gamma = 1.0;
    fit(model, data, data, config);
    CHECK(evaluate(model, data, LossKind::bce).accuracy == 1.0);
}

TEST_CASE("backpropagation through time can overfit a small set") {
    const Dataset<double> data = toy_titanic(16, 11);
    TitanicModel<double> model(TitanicModel<double>::paper_config(), 11);
    TrainConfig config;
    config.epochs = 200;
    config.batch_size = 16;
    config.lr = 0.01;
    config.weight_decay = 0.0;
    config.scheduler_gamma = 1.0;
    const auto history = fit(model, data, data, config);
    CHECK(history.back().val_loss < 0.05);
}

TEST_CASE("multi-class training runs on a tiny conv model") {
    const MnistConfig shrunk(8, {{1, 2, 3, 1}, {2, 2, 3, 1}, {2, 1, 3, 1}},
                             WebConfig(16, 4, 10, 3));
    MnistModel<float> model(shrunk, 1);
    Rng rng(3);
    std::vector<float> pixels(20 * 64);
    for (auto& p : pixels) {
        p = static_cast<float>(rng.uniform01());
    }
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < 20; ++i) {
        labels[i] = static_cast<int>(i % 10);
    }
    Dataset<float> data{Tensor<float>(Shape{20, 1, 8, 8}, pixels), labels};
    TrainConfig config;
    config.epochs = 2;
    config.batch_size = 8;
    config.loss = LossKind::cross_entropy;
    config.clip_norm = 1.0;
    const auto m = fit(model, data, data, config);
    CHECK(m.size() == 2);
    CHECK(std::isfinite(m[1].train_loss));
}

TEST_CASE("final step loss checks its inputs") {
    const int labels[] = {0, 1};
    CHECK_THROWS_AS(final_step_loss(Tensor<double>::zeros({2, 3}), labels, LossKind::bce),
                    DimensionError);
    CHECK_THROWS_AS(final_step_loss(Tensor<double>::zeros({2, 3, 2}), labels, LossKind::bce),
                    DimensionError);
    CHECK(final_step_loss(Tensor<double>::zeros({2, 3, 1}), labels, LossKind::bce).item() ==
          doctest::Approx(std::log(2.0)));
}
