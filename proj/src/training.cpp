#include "webnn/training.hpp"

#include "webnn/models.hpp"
#include "webnn/ops.hpp"

#include <cmath>
#include <string>

namespace webnn {

const char* loss_name(LossKind kind) {
    return kind == LossKind::bce ? "bce" : "cross_entropy";
}

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw ValidationError("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw ValidationError("batch size must be >= 1");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ValidationError("learning rate must be > 0, got " + std::to_string(lr));
    }
    if (!(weight_decay >= 0.0)) {
        throw ValidationError("weight decay must be >= 0");
    }
    if (!(scheduler_gamma > 0.0 && scheduler_gamma <= 1.0)) {
        throw ValidationError("scheduler gamma must lie in (0,1], got " +
                              std::to_string(scheduler_gamma));
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
        throw ValidationError("AdamW betas must lie in [0,1) and eps must be > 0");
    }
    if (clip_norm && !(*clip_norm > 0.0)) {
        throw ValidationError("clip norm must be > 0");
    }
}

template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState<T>& state, double lr,
                const AdamWOptions& options) {
    if (params.size() != grads.size()) {
        throw DimensionError("adamw_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw TrainingError("non-finite gradient at coordinate " + std::to_string(i) +
                                " (step " + std::to_string(state.step + 1) + ")");
        }
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), T(0));
        state.v.assign(params.size(), T(0));
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    const T b1 = static_cast<T>(options.beta1);
    const T b2 = static_cast<T>(options.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        const double p = params[i];
        const double update = m_hat / (std::sqrt(v_hat) + options.eps) + options.weight_decay * p;
        params[i] = static_cast<T>(p - lr * update);
    }
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWOptions options,
                std::optional<double> clip_norm)
    : params_(std::move(params)), states_(params_.size()), options_(options),
      clip_norm_(clip_norm) {}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

template <typename T>
void AdamW<T>::step(double lr) {
    double scale = 1.0;
    if (clip_norm_) {
        double sq = 0.0;
        for (const auto& p : params_) {
            for (T g : p.grad()) {
                sq += static_cast<double>(g) * g;
            }
        }
        const double norm = std::sqrt(sq);
        if (norm > *clip_norm_) {
            scale = *clip_norm_ / norm;
        }
    }
    std::vector<T> grads;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor<T>& p = params_[k];
        grads.assign(p.numel(), T(0));
        auto g = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) {
            grads[i] = scale == 1.0 ? g[i] : static_cast<T>(g[i] * scale);
        }
        adamw_step<T>(p.mutable_data(), grads, states_[k], lr, options_);
    }
}

double exponential_lr(double lr0, double gamma, std::size_t epoch) {
    return lr0 * std::pow(gamma, static_cast<double>(epoch));
}

template <typename T>
Tensor<T> final_step_loss(const Tensor<T>& history, std::span<const int> labels, LossKind loss) {
    if (history.rank() != 3) {
        throw DimensionError("expected an (N,T,O) history, got " + shape_string(history.shape()));
    }
    Tensor<T> logits = select(history, 1, history.dim(1) - 1); // (N,O)
    if (loss == LossKind::cross_entropy) {
        return cross_entropy_from_logits(logits, labels);
    }
    if (logits.dim(1) != 1) {
        throw DimensionError("binary cross-entropy needs a single output, got " +
                             std::to_string(logits.dim(1)));
    }
    std::vector<T> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        targets[i] = static_cast<T>(labels[i]);
    }
    return bce_with_logits(logits, Tensor<T>(Shape{labels.size(), 1}, std::move(targets)));
}

namespace {

std::size_t count_correct(const std::vector<int>& predictions, std::span<const int> labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        correct += predictions[i] == labels[i] ? 1 : 0;
    }
    return correct;
}

} // namespace

template <template <typename> class Model, typename T>
SplitMetrics train_epoch(const Model<T>& model, const Dataset<T>& data, const TrainConfig& config,
                         AdamW<T>& optimizer, double lr, Rng& rng) {
    if (data.size() == 0) {
        throw ValidationError("cannot train on an empty split");
    }
    const std::vector<Batch> order = batches(data.size(), config.batch_size, rng);
    double loss_total = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < order.size(); ++b) {
        const Dataset<T> batch = gather(data, order[b]);
        optimizer.zero_grad();
        const Tensor<T> history = model.history(batch.inputs);
        const Tensor<T> loss = final_step_loss(history, batch.labels, config.loss);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw TrainingError("non-finite loss at batch " + std::to_string(b));
        }
        correct += count_correct(final_predictions(history), batch.labels);
        loss.backward();
        optimizer.step(lr);
        loss_total += value;
    }
    return SplitMetrics{loss_total / static_cast<double>(order.size()),
                        static_cast<double>(correct) / static_cast<double>(data.size())};
}

template <template <typename> class Model, typename T>
SplitMetrics evaluate(const Model<T>& model, const Dataset<T>& data, LossKind loss,
                      std::size_t batch_size) {
    if (data.size() == 0) {
        throw ValidationError("cannot evaluate an empty split");
    }
    NoGradGuard no_grad;
    double loss_total = 0.0;
    std::size_t correct = 0;
    for (const Batch& indices : batches(data.size(), batch_size)) {
        const Dataset<T> batch = gather(data, indices);
        const Tensor<T> history = model.history(batch.inputs);
        loss_total += final_step_loss(history, batch.labels, loss).item() *
                      static_cast<double>(indices.size());
        correct += count_correct(final_predictions(history), batch.labels);
    }
    const double n = static_cast<double>(data.size());
    return SplitMetrics{loss_total / n, static_cast<double>(correct) / n};
}

template <template <typename> class Model, typename T>
std::vector<EpochMetrics> fit(const Model<T>& model, const Dataset<T>& train,
                              const Dataset<T>& val, const TrainConfig& config,
                              const EpochCallback& on_epoch) {
    config.validate();
    AdamW<T> optimizer(model.parameters(),
                       AdamWOptions{config.beta1, config.beta2, config.eps, config.weight_decay},
                       config.clip_norm);
    // Shuffling draws from its own stream so it does not alias initialisation.
    Rng rng(config.seed ^ 0x5DEECE66DULL);
    std::vector<EpochMetrics> out;
    for (std::size_t e = 0; e < config.epochs; ++e) {
        EpochMetrics m;
        m.epoch = e + 1;
        m.lr = exponential_lr(config.lr, config.scheduler_gamma, e);
        const SplitMetrics tr = train_epoch(model, train, config, optimizer, m.lr, rng);
        const SplitMetrics va = evaluate(model, val, config.loss);
        m.train_loss = tr.loss;
        m.train_accuracy = tr.accuracy;
        m.val_loss = va.loss;
        m.val_accuracy = va.accuracy;
        out.push_back(m);
        if (on_epoch) {
            on_epoch(m);
        }
    }
    return out;
}

#define WEBNN_INSTANTIATE_TRAINING(T)                                                             \
    template void adamw_step<T>(std::span<T>, std::span<const T>, AdamWState<T>&, double,         \
                                const AdamWOptions&);                                             \
    template class AdamW<T>;                                                                      \
    template Tensor<T> final_step_loss<T>(const Tensor<T>&, std::span<const int>, LossKind);      \
    template SplitMetrics train_epoch(const TitanicModel<T>&, const Dataset<T>&,                  \
                                      const TrainConfig&, AdamW<T>&, double, Rng&);               \
    template SplitMetrics train_epoch(const MnistModel<T>&, const Dataset<T>&,                    \
                                      const TrainConfig&, AdamW<T>&, double, Rng&);               \
    template SplitMetrics evaluate(const TitanicModel<T>&, const Dataset<T>&, LossKind,           \
                                   std::size_t);                                                  \
    template SplitMetrics evaluate(const MnistModel<T>&, const Dataset<T>&, LossKind, std::size_t); \
    template std::vector<EpochMetrics> fit(const TitanicModel<T>&, const Dataset<T>&,             \
                                           const Dataset<T>&, const TrainConfig&,                 \
                                           const EpochCallback&);                                 \
    template std::vector<EpochMetrics> fit(const MnistModel<T>&, const Dataset<T>&,               \
                                           const Dataset<T>&, const TrainConfig&,                 \
                                           const EpochCallback&);

WEBNN_INSTANTIATE_TRAINING(float)
WEBNN_INSTANTIATE_TRAINING(double)

} // namespace webnn
