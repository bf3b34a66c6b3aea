#pragma once

#include "webnn/tensor.hpp"
#include "webnn/web_layer.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace webnn {

inline constexpr std::size_t kTitanicFeatures = 8;
inline constexpr std::size_t kMnistClasses = 10;

struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    std::size_t stride = 1;

    bool operator==(const ConvSpec&) const = default;
};

/// Convolution stack feeding a web layer. Construction checks that every
/// stage fits, the channels chain, and the flattened output width equals I.
class MnistConfig {
public:
    MnistConfig(std::size_t image_side, std::vector<ConvSpec> convs, WebConfig web);

    /// Three K=3 stride-1 convs (1->16->4->1): 28->26->24->22, I = 484, Q = 500.
    static MnistConfig paper();
    /// First conv at stride 2: 28->13->11->9, I = 81, Q = 100.
    static MnistConfig desk();

    std::size_t image_side() const { return image_side_; }
    const std::vector<ConvSpec>& convs() const { return convs_; }
    const WebConfig& web() const { return web_; }
    /// Spatial side after each conv stage.
    std::vector<std::size_t> stage_sides() const;
    std::size_t flatten_width() const;

private:
    std::size_t image_side_;
    std::vector<ConvSpec> convs_;
    WebConfig web_;
};

template <typename T>
struct ConvLayer {
    ConvSpec spec;
    Tensor<T> kernel; // (C_out,C_in,K,K)
    Tensor<T> bias;   // (C_out)
};

/// Web layer on the 8 preprocessed passenger features; O must be 1.
template <typename T>
class TitanicModel {
public:
    TitanicModel(WebConfig config, std::uint64_t seed);
    TitanicModel(WebConfig config, WebParams<T> web);

    /// Q=15, I=8, O=1, T=30.
    static WebConfig paper_config();

    const WebConfig& config() const { return config_; }
    const WebParams<T>& web() const { return web_; }
    std::size_t output_count() const { return 1; }

    /// features (N,8) -> web output history (N,T,1), input held constant.
    Tensor<T> history(const Tensor<T>& features) const;
    std::vector<Tensor<T>> parameters() const { return {web_.weight, web_.bias}; }

private:
    WebConfig config_;
    WebParams<T> web_;
};

template <typename T>
class MnistModel {
public:
    MnistModel(MnistConfig config, std::uint64_t seed);
    MnistModel(MnistConfig config, std::vector<ConvLayer<T>> convs, WebParams<T> web);

    const MnistConfig& config() const { return config_; }
    const std::vector<ConvLayer<T>>& convs() const { return convs_; }
    const WebParams<T>& web() const { return web_; }
    std::size_t output_count() const { return config_.web().outputs(); }

    /// images (N,1,H,W) -> logits history (N,T,O).
    Tensor<T> history(const Tensor<T>& images) const;
    /// Conv kernels, conv biases, web W, web b.
    std::vector<Tensor<T>> parameters() const;

private:
    MnistConfig config_;
    std::vector<ConvLayer<T>> convs_;
    WebParams<T> web_;
};

template <typename T>
struct TitanicOutput {
    Tensor<T> probability; // (N,1) sigmoid of the final-timestep readout
    Tensor<T> history;     // (N,T,1)
    std::vector<int> prediction;
};

template <typename T>
TitanicOutput<T> titanic_forward(const TitanicModel<T>& model, const Tensor<T>& features);

template <typename T>
struct MnistOutput {
    Tensor<T> logits_history; // (N,T,10)
    std::vector<int> prediction;
};

template <typename T>
MnistOutput<T> mnist_forward(const MnistModel<T>& model, const Tensor<T>& images);

/// Per-timestep class decisions, row-major (N,T).
struct PredictionTrace {
    std::size_t samples = 0;
    std::size_t timesteps = 0;
    std::vector<int> classes;

    int at(std::size_t sample, std::size_t t) const { return classes[sample * timesteps + t]; }
    /// The decision at the final timestep for each sample.
    std::vector<int> final_predictions() const;
};

/// Decision for one readout vector. With a single output the readout is a
/// logit and the decision is sigmoid(logit) >= 0.5, i.e. logit >= 0; with
/// several outputs it is the first index of the maximum.
template <typename T>
int decide(std::span<const T> readout);

/// Applies `decide` at every timestep of an (N,T,O) history.
template <typename T>
PredictionTrace predict_history(const Tensor<T>& history);

/// Final-timestep decisions of an (N,T,O) history.
template <typename T>
std::vector<int> final_predictions(const Tensor<T>& history);

} // namespace webnn
