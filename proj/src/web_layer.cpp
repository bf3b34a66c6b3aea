#include "webnn/web_layer.hpp"

#include "webnn/ops.hpp"
#include "webnn/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace webnn {

WebConfig::WebConfig(std::size_t neurons, std::size_t inputs, std::size_t outputs,
                     std::size_t timesteps, double alpha)
    : neurons_(neurons), inputs_(inputs), outputs_(outputs), timesteps_(timesteps),
      alpha_(alpha) {
    if (neurons == 0 || inputs == 0 || outputs == 0 || timesteps == 0) {
        throw ValidationError("web layer needs Q, I, O, T >= 1 (got Q=" + std::to_string(neurons) +
                              " I=" + std::to_string(inputs) + " O=" + std::to_string(outputs) +
                              " T=" + std::to_string(timesteps) + ")");
    }
    if (neurons < inputs + outputs) {
        throw ValidationError("web layer needs Q >= I + O (got Q=" + std::to_string(neurons) +
                              " I=" + std::to_string(inputs) + " O=" + std::to_string(outputs) +
                              ")");
    }
    if (!(alpha >= 0.0)) {
        throw ValidationError("leaky ReLU slope must be >= 0");
    }
}

template <typename T>
WebParams<T> init_params(const WebConfig& config, std::uint64_t seed) {
    const std::size_t q = config.neurons();
    const double bound = 1.0 / std::sqrt(static_cast<double>(q));
    Rng rng(seed);
    std::vector<T> weight(q * q * q);
    for (T& w : weight) {
        w = static_cast<T>(rng.uniform(-bound, bound));
    }
    return WebParams<T>{Tensor<T>(Shape{q, q, q}, std::move(weight), true),
                        Tensor<T>::zeros(Shape{q, q}, true)};
}

template <typename T>
WebState<T> zero_state(const WebConfig& config, std::size_t batch) {
    const std::size_t q = config.neurons();
    return WebState<T>{Tensor<T>::zeros(Shape{batch, q, q})};
}

namespace {

template <typename T>
void check_state(const WebState<T>& state, const WebConfig& config) {
    const std::size_t q = config.neurons();
    const Shape& s = state.values.shape();
    if (s.size() != 3 || s[1] != q || s[2] != q) {
        throw DimensionError("web state must be (N," + std::to_string(q) + "," +
                             std::to_string(q) + "), got " + shape_string(s));
    }
}

template <typename T>
void check_params(const WebParams<T>& params, const WebConfig& config) {
    const std::size_t q = config.neurons();
    if (params.weight.shape() != Shape{q, q, q} || params.bias.shape() != Shape{q, q}) {
        throw DimensionError("web params must be W (Q,Q,Q) and b (Q,Q) for Q=" +
                             std::to_string(q) + ", got " + shape_string(params.weight.shape()) +
                             " and " + shape_string(params.bias.shape()));
    }
}

} // namespace

template <typename T>
WebState<T> inject_input(const WebState<T>& state, const Tensor<T>& x_t, const WebConfig& config) {
    check_state(state, config);
    const std::size_t batch = state.values.dim(0);
    if (x_t.rank() != 2 || x_t.dim(0) != batch || x_t.dim(1) != config.inputs()) {
        throw DimensionError("input step must be (" + std::to_string(batch) + "," +
                             std::to_string(config.inputs()) + "), got " +
                             shape_string(x_t.shape()));
    }
    const std::size_t q = config.neurons();
    Tensor<T> padded = reshape(pad_axis(x_t, 1, q), Shape{batch, 1, q});
    return WebState<T>{add(state.values, padded)};
}

template <typename T>
WebState<T> step_naive(const WebState<T>& state, const WebParams<T>& params,
                       const WebConfig& config) {
    check_state(state, config);
    check_params(params, config);
    const std::size_t batch = state.values.dim(0);
    const std::size_t q = config.neurons();
    const T alpha = static_cast<T>(config.alpha());
    const T* s = state.values.data().data();
    const T* w = params.weight.data().data();
    const T* b = params.bias.data().data();

    std::vector<T> out(batch * q * q);
    std::vector<T> column(q);
    for (std::size_t n = 0; n < batch; ++n) {
        const T* sn = s + n * q * q;
        for (std::size_t i = 0; i < q; ++i) {
            for (std::size_t r = 0; r < q; ++r) {
                column[r] = sn[r * q + i];
            }
            const T* wi = w + i * q * q;
            T* row = out.data() + (n * q + i) * q;
            for (std::size_t c = 0; c < q; ++c) {
                T z = b[i * q + c];
                for (std::size_t r = 0; r < q; ++r) {
                    z += wi[c * q + r] * column[r];
                }
                row[c] = z >= T(0) ? z : alpha * z;
            }
        }
    }

    return WebState<T>{detail::make_result<T>(
        Shape{batch, q, q}, std::move(out), {state.values, params.weight, params.bias},
        "web_step_naive", [batch, q, alpha](detail::Node<T>& self) {
            detail::Node<T>& ns = *self.inputs[0];
            detail::Node<T>& nw = *self.inputs[1];
            detail::Node<T>& nb = *self.inputs[2];
            T* gs = ns.requires_grad ? ns.grad_buffer().data() : nullptr;
            T* gw = nw.requires_grad ? nw.grad_buffer().data() : nullptr;
            T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
            std::vector<T> column(q);
            std::vector<T> dz(q);
            for (std::size_t n = 0; n < batch; ++n) {
                const T* sn = ns.data.data() + n * q * q;
                for (std::size_t i = 0; i < q; ++i) {
                    for (std::size_t r = 0; r < q; ++r) {
                        column[r] = sn[r * q + i];
                    }
                    const T* wi = nw.data.data() + i * q * q;
                    const T* row = self.data.data() + (n * q + i) * q;
                    const T* grow = self.grad.data() + (n * q + i) * q;
                    for (std::size_t c = 0; c < q; ++c) {
                        // The activation keeps the sign of z, so the output tells the branch.
                        dz[c] = row[c] >= T(0) ? grow[c] : alpha * grow[c];
                        if (alpha == T(0) && row[c] == T(0)) {
                            T z = nb.data[i * q + c];
                            for (std::size_t r = 0; r < q; ++r) {
                                z += wi[c * q + r] * column[r];
                            }
                            dz[c] = z >= T(0) ? grow[c] : T(0);
                        }
                    }
                    for (std::size_t c = 0; c < q; ++c) {
                        if (gb != nullptr) {
                            gb[i * q + c] += dz[c];
                        }
                        if (gw != nullptr) {
                            T* gwrow = gw + i * q * q + c * q;
                            for (std::size_t r = 0; r < q; ++r) {
                                gwrow[r] += dz[c] * column[r];
                            }
                        }
                    }
                    if (gs != nullptr) {
                        T* gsn = gs + n * q * q;
                        for (std::size_t r = 0; r < q; ++r) {
                            T acc = 0;
                            for (std::size_t c = 0; c < q; ++c) {
                                acc += wi[c * q + r] * dz[c];
                            }
                            gsn[r * q + i] += acc;
                        }
                    }
                }
            }
        })};
}

template <typename T>
WebState<T> step_vectorized(const WebState<T>& state, const WebParams<T>& params,
                            const WebConfig& config) {
    check_state(state, config);
    check_params(params, config);
    const std::size_t batch = state.values.dim(0);
    const std::size_t q = config.neurons();
    // Row i of the transpose is neuron i's incoming column.
    Tensor<T> columns = reshape(transpose_last2(state.values), Shape{batch, q, q, 1});
    Tensor<T> z = reshape(matmul(params.weight, columns), Shape{batch, q, q});
    return WebState<T>{leaky_relu(add(z, params.bias), config.alpha())};
}

template <typename T>
WebState<T> step(const WebState<T>& state, const WebParams<T>& params, const WebConfig& config,
                 StepAlgorithm algorithm) {
    return algorithm == StepAlgorithm::naive ? step_naive(state, params, config)
                                             : step_vectorized(state, params, config);
}

template <typename T>
Tensor<T> readout(const WebState<T>& state, const WebConfig& config) {
    check_state(state, config);
    Tensor<T> received = mean_over_axis(state.values, 1); // (N,Q): mean of each column
    return narrow(received, 1, config.first_output(), config.outputs());
}

template <typename T>
Tensor<T> forward(const WebParams<T>& params, const WebConfig& config, const Tensor<T>& inputs,
                  StepAlgorithm algorithm) {
    if (inputs.rank() != 3 || inputs.dim(2) != config.inputs()) {
        throw DimensionError("web input must be (N,T_i," + std::to_string(config.inputs()) +
                             "), got " + shape_string(inputs.shape()));
    }
    const std::size_t series = inputs.dim(1);
    const std::size_t steps = config.timesteps();
    if (series != 1 && series != steps) {
        throw ValidationError("input series length must be 1 or T=" + std::to_string(steps) +
                              ", got " + std::to_string(series));
    }
    const std::size_t batch = inputs.dim(0);
    WebState<T> state = zero_state<T>(config, batch);
    Tensor<T> constant_input;
    if (series == 1) {
        constant_input = select(inputs, 1, 0);
    }
    std::vector<Tensor<T>> history;
    history.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const Tensor<T> x_t = series == 1 ? constant_input : select(inputs, 1, t);
        state = step(inject_input(state, x_t, config), params, config, algorithm);
        history.push_back(readout(state, config));
    }
    return stack(history, 1);
}

BenchReport bench_step(const WebConfig& config, std::size_t batch, std::size_t iterations,
                       std::uint64_t seed) {
    if (batch == 0 || iterations == 0) {
        throw ValidationError("benchmark needs batch >= 1 and iterations >= 1");
    }
    using Clock = std::chrono::steady_clock;
    NoGradGuard no_grad;
    const std::size_t q = config.neurons();
    WebParams<float> params = init_params<float>(config, seed);
    {
        Rng rng(seed + 1);
        for (float& v : params.bias.mutable_data()) {
            v = static_cast<float>(rng.uniform(-0.1, 0.1));
        }
    }
    auto random_state = [&](std::uint64_t s) {
        Rng rng(s);
        std::vector<float> values(batch * q * q);
        for (float& v : values) {
            v = static_cast<float>(rng.uniform(-1.0, 1.0));
        }
        return WebState<float>{Tensor<float>(Shape{batch, q, q}, std::move(values))};
    };

    BenchReport report;
    report.neurons = q;
    report.batch = batch;
    report.timesteps = config.timesteps();
    report.iterations = iterations;

    std::vector<double> naive_times;
    std::vector<double> vector_times;
    constexpr std::size_t warmup = 2;
    for (std::size_t round = 0; round < warmup + iterations; ++round) {
        WebState<float> state = random_state(seed + 100 + round);
        for (std::size_t t = 0; t < config.timesteps(); ++t) {
            auto t0 = Clock::now();
            WebState<float> naive = step_naive(state, params, config);
            auto t1 = Clock::now();
            WebState<float> vectorized = step_vectorized(state, params, config);
            auto t2 = Clock::now();

            auto a = naive.values.data();
            auto b = vectorized.values.data();
            double diff = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                diff = std::max(diff, static_cast<double>(std::abs(a[i] - b[i])));
            }
            report.max_abs_diff = std::max(report.max_abs_diff, diff);
            if (!(diff <= 1e-5)) {
                throw EquivalenceError("naive and vectorized steps differ by " +
                                       std::to_string(diff) + " at round " +
                                       std::to_string(round) + ", step " + std::to_string(t));
            }
            if (round >= warmup) {
                naive_times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                vector_times.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
            }
            state = vectorized;
        }
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t mid = v.size() / 2;
        return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    };
    report.naive_ms = median(naive_times);
    report.vectorized_ms = median(vector_times);
    report.ratio = report.vectorized_ms > 0.0 ? report.naive_ms / report.vectorized_ms : 0.0;
    return report;
}

#define WEBNN_INSTANTIATE_WEB(T)                                                                  \
    template WebParams<T> init_params<T>(const WebConfig&, std::uint64_t);                        \
    template WebState<T> zero_state<T>(const WebConfig&, std::size_t);                            \
    template WebState<T> inject_input(const WebState<T>&, const Tensor<T>&, const WebConfig&);    \
    template WebState<T> step_naive(const WebState<T>&, const WebParams<T>&, const WebConfig&);   \
    template WebState<T> step_vectorized(const WebState<T>&, const WebParams<T>&,                 \
                                         const WebConfig&);                                       \
    template WebState<T> step(const WebState<T>&, const WebParams<T>&, const WebConfig&,          \
                              StepAlgorithm);                                                     \
    template Tensor<T> readout(const WebState<T>&, const WebConfig&);                             \
    template Tensor<T> forward(const WebParams<T>&, const WebConfig&, const Tensor<T>&,           \
                               StepAlgorithm);

WEBNN_INSTANTIATE_WEB(float)
WEBNN_INSTANTIATE_WEB(double)

#undef WEBNN_INSTANTIATE_WEB

} // namespace webnn
