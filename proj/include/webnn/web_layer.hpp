#pragma once

// Complete-digraph recurrent layer.
//
// Q neurons each send a Q-vector to every neuron (itself included) on every
// timestep. The state of a batch is S (N,Q,Q): row i holds what neuron i sent
// last step, column j holds what neuron j will receive. One timestep feeds
// column i through neuron i's affine map (W[i], b[i]), applies leaky ReLU and
// writes the result into row i.
//
// Input neurons are indices [0, I); output neurons are [Q-O, Q).

#include "webnn/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <stdexcept>

namespace webnn {

class WebConfig {
public:
    /// Throws ValidationError unless Q, I, O, T >= 1, Q >= I + O and alpha >= 0.
    WebConfig(std::size_t neurons, std::size_t inputs, std::size_t outputs, std::size_t timesteps,
              double alpha = 0.01);

    std::size_t neurons() const { return neurons_; }
    std::size_t inputs() const { return inputs_; }
    std::size_t outputs() const { return outputs_; }
    std::size_t timesteps() const { return timesteps_; }
    double alpha() const { return alpha_; }
    std::size_t first_output() const { return neurons_ - outputs_; }

    bool operator==(const WebConfig&) const = default;

private:
    std::size_t neurons_;
    std::size_t inputs_;
    std::size_t outputs_;
    std::size_t timesteps_;
    double alpha_;
};

template <typename T>
struct WebParams {
    Tensor<T> weight; // (Q,Q,Q); weight[i] maps neuron i's incoming column to its outgoing row
    Tensor<T> bias;   // (Q,Q)

    std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
};

template <typename T>
struct WebState {
    Tensor<T> values; // (N,Q,Q)
};

enum class StepAlgorithm { naive, vectorized };

/// W uniform in [-1/sqrt(Q), 1/sqrt(Q)] from the seeded generator, b = 0.
/// Both tensors require gradients.
template <typename T>
WebParams<T> init_params(const WebConfig& config, std::uint64_t seed);

template <typename T>
WebState<T> zero_state(const WebConfig& config, std::size_t batch);

/// Adds x_t[n,k] to every entry of input neuron k's incoming column.
template <typename T>
WebState<T> inject_input(const WebState<T>& state, const Tensor<T>& x_t, const WebConfig& config);

/// Per-neuron reference update: one matrix-vector product per (sample, neuron).
template <typename T>
WebState<T> step_naive(const WebState<T>& state, const WebParams<T>& params,
                       const WebConfig& config);

/// All Q neuron maps applied as one batched product (Q,Q,Q) x (N,Q,Q,1).
template <typename T>
WebState<T> step_vectorized(const WebState<T>& state, const WebParams<T>& params,
                            const WebConfig& config);

template <typename T>
WebState<T> step(const WebState<T>& state, const WebParams<T>& params, const WebConfig& config,
                 StepAlgorithm algorithm);

/// Mean over senders of each output neuron's incoming column: (N,O).
template <typename T>
Tensor<T> readout(const WebState<T>& state, const WebConfig& config);

/// Unrolls T timesteps from a zero state. `inputs` is (N,T_i,I) with T_i in
/// {1, T}; T_i = 1 repeats the same input every step. Returns the (N,T,O)
/// output history with gradients flowing through every step.
template <typename T>
Tensor<T> forward(const WebParams<T>& params, const WebConfig& config, const Tensor<T>& inputs,
                  StepAlgorithm algorithm = StepAlgorithm::vectorized);

class EquivalenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BenchReport {
    std::size_t neurons = 0;
    std::size_t batch = 0;
    std::size_t timesteps = 0;
    std::size_t iterations = 0;
    double naive_ms = 0.0;      // median per step
    double vectorized_ms = 0.0; // median per step
    double ratio = 0.0;         // naive_ms / vectorized_ms
    double max_abs_diff = 0.0;
};

/// Times both step algorithms (f32) on identical seeded parameters and
/// states. Two warmup rounds precede `iterations` timed rounds of `timesteps`
/// steps each. Throws EquivalenceError if any step differs by more than 1e-5.
BenchReport bench_step(const WebConfig& config, std::size_t batch, std::size_t iterations,
                       std::uint64_t seed = 0);

} // namespace webnn
