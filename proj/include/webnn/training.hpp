#pragma once

#include "webnn/data.hpp"
#include "webnn/random.hpp"
#include "webnn/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace webnn {

enum class LossKind { bce, cross_entropy };

const char* loss_name(LossKind kind);

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    double lr = 0.01;
    double weight_decay = 0.001;
    double scheduler_gamma = 0.9;
    std::uint64_t seed = 42;
    LossKind loss = LossKind::bce;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::optional<double> clip_norm; // global L2 max-norm, off by default

    /// Throws ValidationError on out-of-range values.
    void validate() const;
};

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

template <typename T>
struct AdamWState {
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t step = 0;
};

/// One decoupled-weight-decay Adam update of `params` in place. The step
/// counter is incremented before bias correction. Throws TrainingError on a
/// non-finite gradient.
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState<T>& state, double lr,
                const AdamWOptions& options);

/// AdamW over a fixed list of parameter tensors. Tensors without an
/// accumulated gradient are treated as having a zero gradient.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<Tensor<T>> params, AdamWOptions options,
          std::optional<double> clip_norm = std::nullopt);

    void zero_grad();
    void step(double lr);

    const std::vector<AdamWState<T>>& states() const { return states_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<AdamWState<T>> states_;
    AdamWOptions options_;
    std::optional<double> clip_norm_;
};

/// lr0 * gamma^epoch, epoch counted from 0.
double exponential_lr(double lr0, double gamma, std::size_t epoch);

struct SplitMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct EpochMetrics {
    std::size_t epoch = 0; // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

/// Scalar loss of the final-timestep readout of an (N,T,O) history.
template <typename T>
Tensor<T> final_step_loss(const Tensor<T>& history, std::span<const int> labels, LossKind loss);

/// One shuffled pass over `data`, keeping the last partial batch. Returns the
/// mean batch loss and the accuracy over all samples seen.
template <template <typename> class Model, typename T>
SplitMetrics train_epoch(const Model<T>& model, const Dataset<T>& data, const TrainConfig& config,
                         AdamW<T>& optimizer, double lr, Rng& rng);

/// Sample-mean loss and final-timestep accuracy without recording a graph.
template <template <typename> class Model, typename T>
SplitMetrics evaluate(const Model<T>& model, const Dataset<T>& data, LossKind loss,
                      std::size_t batch_size = 256);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Runs `config.epochs` epochs with the learning rate decayed per epoch and
/// the validation split evaluated after each one.
template <template <typename> class Model, typename T>
std::vector<EpochMetrics> fit(const Model<T>& model, const Dataset<T>& train,
                              const Dataset<T>& val, const TrainConfig& config,
                              const EpochCallback& on_epoch = {});

} // namespace webnn
