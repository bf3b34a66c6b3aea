#include "webnn/models.hpp"

#include "webnn/ops.hpp"
#include "webnn/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace webnn {

MnistConfig::MnistConfig(std::size_t image_side, std::vector<ConvSpec> convs, WebConfig web)
    : image_side_(image_side), convs_(std::move(convs)), web_(web) {
    if (image_side_ == 0) {
        throw ValidationError("image side must be positive");
    }
    std::size_t channels = 1;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const ConvSpec& c = convs_[l];
        if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
            throw ValidationError("conv layer " + std::to_string(l + 1) +
                                  " needs positive channels, kernel and stride");
        }
        if (c.in_channels != channels) {
            throw ValidationError("conv layer " + std::to_string(l + 1) + " expects " +
                                  std::to_string(c.in_channels) + " input channels but receives " +
                                  std::to_string(channels));
        }
        channels = c.out_channels;
    }
    const std::size_t width = flatten_width(); // throws if a stage does not fit
    if (width != web_.inputs()) {
        throw ValidationError("flattened conv output has width " + std::to_string(width) +
                              " but the web layer expects I=" + std::to_string(web_.inputs()));
    }
    if (web_.outputs() != kMnistClasses) {
        throw ValidationError("MNIST web layer needs O=10, got O=" +
                              std::to_string(web_.outputs()));
    }
}

MnistConfig MnistConfig::paper() {
    return MnistConfig(28, {{1, 16, 3, 1}, {16, 4, 3, 1}, {4, 1, 3, 1}}, WebConfig(500, 484, 10, 5));
}

MnistConfig MnistConfig::desk() {
    return MnistConfig(28, {{1, 16, 3, 2}, {16, 4, 3, 1}, {4, 1, 3, 1}}, WebConfig(100, 81, 10, 5));
}

std::vector<std::size_t> MnistConfig::stage_sides() const {
    std::vector<std::size_t> sides;
    std::size_t side = image_side_;
    for (const ConvSpec& c : convs_) {
        side = conv_output_extent(side, c.kernel, c.stride);
        sides.push_back(side);
    }
    return sides;
}

std::size_t MnistConfig::flatten_width() const {
    std::size_t side = image_side_;
    std::size_t channels = 1;
    for (const ConvSpec& c : convs_) {
        side = conv_output_extent(side, c.kernel, c.stride);
        channels = c.out_channels;
    }
    return channels * side * side;
}

template <typename T>
TitanicModel<T>::TitanicModel(WebConfig config, std::uint64_t seed)
    : TitanicModel(config, init_params<T>(config, seed)) {}

template <typename T>
TitanicModel<T>::TitanicModel(WebConfig config, WebParams<T> web)
    : config_(config), web_(std::move(web)) {
    if (config_.inputs() != kTitanicFeatures) {
        throw ValidationError("Titanic model needs I=8, got I=" +
                              std::to_string(config_.inputs()));
    }
    if (config_.outputs() != 1) {
        throw ValidationError("Titanic model needs O=1, got O=" +
                              std::to_string(config_.outputs()));
    }
}

template <typename T>
WebConfig TitanicModel<T>::paper_config() {
    return WebConfig(15, 8, 1, 30);
}

template <typename T>
Tensor<T> TitanicModel<T>::history(const Tensor<T>& features) const {
    if (features.rank() != 2 || features.dim(1) != kTitanicFeatures) {
        throw DimensionError("Titanic features must be (N,8), got " +
                             shape_string(features.shape()));
    }
    return forward(web_, config_, reshape(features, Shape{features.dim(0), 1, kTitanicFeatures}));
}

template <typename T>
MnistModel<T>::MnistModel(MnistConfig config, std::uint64_t seed)
    : config_(std::move(config)), web_(init_params<T>(config_.web(), seed)) {
    for (std::size_t l = 0; l < config_.convs().size(); ++l) {
        const ConvSpec& c = config_.convs()[l];
        const double fan_in = static_cast<double>(c.in_channels * c.kernel * c.kernel);
        const double bound = 1.0 / std::sqrt(fan_in);
        Rng rng(seed + 1 + l);
        std::vector<T> kernel(c.out_channels * c.in_channels * c.kernel * c.kernel);
        for (T& w : kernel) {
            w = static_cast<T>(rng.uniform(-bound, bound));
        }
        convs_.push_back(ConvLayer<T>{
            c, Tensor<T>(Shape{c.out_channels, c.in_channels, c.kernel, c.kernel},
                         std::move(kernel), true),
            Tensor<T>::zeros(Shape{c.out_channels}, true)});
    }
}

template <typename T>
MnistModel<T>::MnistModel(MnistConfig config, std::vector<ConvLayer<T>> convs, WebParams<T> web)
    : config_(std::move(config)), convs_(std::move(convs)), web_(std::move(web)) {
    if (convs_.size() != config_.convs().size()) {
        throw ValidationError("MNIST model has " + std::to_string(convs_.size()) +
                              " conv layers but its config lists " +
                              std::to_string(config_.convs().size()));
    }
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const ConvSpec& c = config_.convs()[l];
        if (convs_[l].kernel.shape() != Shape{c.out_channels, c.in_channels, c.kernel, c.kernel} ||
            convs_[l].bias.shape() != Shape{c.out_channels}) {
            throw DimensionError("conv layer " + std::to_string(l + 1) +
                                 " tensors do not match its spec");
        }
    }
}

template <typename T>
Tensor<T> MnistModel<T>::history(const Tensor<T>& images) const {
    const std::size_t side = config_.image_side();
    const std::size_t channels = config_.convs().empty() ? 1 : config_.convs()[0].in_channels;
    if (images.rank() != 4 || images.dim(1) != channels || images.dim(2) != side ||
        images.dim(3) != side) {
        throw DimensionError("images must be (N," + std::to_string(channels) + "," +
                             std::to_string(side) + "," + std::to_string(side) + "), got " +
                             shape_string(images.shape()));
    }
    const std::size_t batch = images.dim(0);
    Tensor<T> x = images;
    for (const ConvLayer<T>& layer : convs_) {
        x = leaky_relu(conv2d(x, layer.kernel, layer.bias, layer.spec.stride),
                       config_.web().alpha());
    }
    return forward(web_, config_.web(), reshape(x, Shape{batch, 1, config_.flatten_width()}));
}

template <typename T>
std::vector<Tensor<T>> MnistModel<T>::parameters() const {
    std::vector<Tensor<T>> params;
    for (const auto& layer : convs_) {
        params.push_back(layer.kernel);
    }
    for (const auto& layer : convs_) {
        params.push_back(layer.bias);
    }
    params.push_back(web_.weight);
    params.push_back(web_.bias);
    return params;
}

template <typename T>
TitanicOutput<T> titanic_forward(const TitanicModel<T>& model, const Tensor<T>& features) {
    Tensor<T> history = model.history(features);
    Tensor<T> final_logit = select(history, 1, model.config().timesteps() - 1); // (N,1)
    TitanicOutput<T> out{sigmoid(final_logit), history, final_predictions(history)};
    return out;
}

template <typename T>
MnistOutput<T> mnist_forward(const MnistModel<T>& model, const Tensor<T>& images) {
    Tensor<T> history = model.history(images);
    return MnistOutput<T>{history, final_predictions(history)};
}

std::vector<int> PredictionTrace::final_predictions() const {
    std::vector<int> out(samples);
    for (std::size_t n = 0; n < samples; ++n) {
        out[n] = at(n, timesteps - 1);
    }
    return out;
}

template <typename T>
int decide(std::span<const T> readout) {
    if (readout.size() == 1) {
        return readout[0] >= T(0) ? 1 : 0;
    }
    return static_cast<int>(std::max_element(readout.begin(), readout.end()) - readout.begin());
}

template <typename T>
PredictionTrace predict_history(const Tensor<T>& history) {
    if (history.rank() != 3) {
        throw DimensionError("history must be (N,T,O), got " + shape_string(history.shape()));
    }
    PredictionTrace trace;
    trace.samples = history.dim(0);
    trace.timesteps = history.dim(1);
    const std::size_t outputs = history.dim(2);
    trace.classes.resize(trace.samples * trace.timesteps);
    auto data = history.data();
    for (std::size_t i = 0; i < trace.classes.size(); ++i) {
        trace.classes[i] = decide<T>(data.subspan(i * outputs, outputs));
    }
    return trace;
}

template <typename T>
std::vector<int> final_predictions(const Tensor<T>& history) {
    return predict_history(history).final_predictions();
}

template class TitanicModel<float>;
template class TitanicModel<double>;
template class MnistModel<float>;
template class MnistModel<double>;

#define WEBNN_INSTANTIATE_MODELS(T)                                                               \
    template TitanicOutput<T> titanic_forward(const TitanicModel<T>&, const Tensor<T>&);          \
    template MnistOutput<T> mnist_forward(const MnistModel<T>&, const Tensor<T>&);                \
    template int decide<T>(std::span<const T>);                                                   \
    template PredictionTrace predict_history(const Tensor<T>&);                                   \
    template std::vector<int> final_predictions(const Tensor<T>&);

WEBNN_INSTANTIATE_MODELS(float)
WEBNN_INSTANTIATE_MODELS(double)

#undef WEBNN_INSTANTIATE_MODELS

} // namespace webnn
