#include "webnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace webnn {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "WNN1";

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(std::string_view bytes, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    }
    return v;
}

} // namespace

const CheckpointTensor& Checkpoint::tensor(std::string_view name) const {
    for (const auto& t : tensors) {
        if (t.name == name) {
            return t;
        }
    }
    throw FormatError("checkpoint has no tensor named '" + std::string(name) + "'");
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    json manifest = json::array();
    std::size_t offset = 0;
    for (const auto& t : checkpoint.tensors) {
        if (shape_numel(t.shape) != t.values.size()) {
            throw DimensionError("checkpoint tensor '" + t.name + "' has shape " +
                                 shape_string(t.shape) + " but " +
                                 std::to_string(t.values.size()) + " values");
        }
        manifest.push_back(
            {{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}});
        offset += t.values.size() * sizeof(float);
    }
    const std::string header = json{{"config", checkpoint.config}, {"tensors", manifest}}.dump();

    std::string out;
    out.reserve(12 + header.size() + offset);
    out.append(kMagic);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out.append(header);
    for (const auto& t : checkpoint.tensors) {
        for (float v : t.values) {
            put_u32(out, std::bit_cast<std::uint32_t>(v));
        }
    }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < 12) {
        throw FormatError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
    }
    if (bytes.substr(0, 4) != kMagic) {
        throw FormatError("not a checkpoint: bad magic bytes");
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::size_t header_length = get_u32(bytes, 8);
    if (bytes.size() < 12 + header_length) {
        throw FormatError("checkpoint truncated inside the header");
    }
    json header;
    try {
        header = json::parse(bytes.substr(12, header_length));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    const std::string_view payload = bytes.substr(12 + header_length);

    Checkpoint checkpoint;
    try {
        checkpoint.config = header.at("config");
        std::size_t expected_offset = 0;
        for (const auto& entry : header.at("tensors")) {
            CheckpointTensor t;
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<Shape>();
            if (entry.at("dtype").get<std::string>() != "f32") {
                throw FormatError("checkpoint tensor '" + t.name + "' has unsupported dtype");
            }
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            if (offset != expected_offset) {
                throw FormatError("checkpoint tensor '" + t.name + "' is out of manifest order");
            }
            const std::size_t count = shape_numel(t.shape);
            if (offset + count * sizeof(float) > payload.size()) {
                throw FormatError("checkpoint truncated inside tensor '" + t.name + "'");
            }
            t.values.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                t.values[i] = std::bit_cast<float>(get_u32(payload, offset + i * sizeof(float)));
            }
            expected_offset = offset + count * sizeof(float);
            checkpoint.tensors.push_back(std::move(t));
        }
        if (expected_offset != payload.size()) {
            throw FormatError("checkpoint has " + std::to_string(payload.size() - expected_offset) +
                              " trailing bytes");
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint manifest is malformed: ") + e.what());
    }
    return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    const std::string bytes = encode_checkpoint(checkpoint);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

json web_config_to_json(const WebConfig& config) {
    return json{{"Q", config.neurons()},
                {"I", config.inputs()},
                {"O", config.outputs()},
                {"T", config.timesteps()},
                {"alpha", config.alpha()}};
}

WebConfig web_config_from_json(const json& j) {
    try {
        return WebConfig(j.at("Q").get<std::size_t>(), j.at("I").get<std::size_t>(),
                         j.at("O").get<std::size_t>(), j.at("T").get<std::size_t>(),
                         j.at("alpha").get<double>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad web config: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("bad web config: ") + e.what());
    }
}

json mnist_config_to_json(const MnistConfig& config) {
    json convs = json::array();
    for (const ConvSpec& c : config.convs()) {
        convs.push_back({{"in_channels", c.in_channels},
                         {"out_channels", c.out_channels},
                         {"kernel", c.kernel},
                         {"stride", c.stride}});
    }
    return json{{"image_side", config.image_side()},
                {"convs", convs},
                {"web", web_config_to_json(config.web())}};
}

MnistConfig mnist_config_from_json(const json& j) {
    try {
        std::vector<ConvSpec> convs;
        for (const auto& c : j.at("convs")) {
            convs.push_back(ConvSpec{c.at("in_channels").get<std::size_t>(),
                                     c.at("out_channels").get<std::size_t>(),
                                     c.at("kernel").get<std::size_t>(),
                                     c.at("stride").get<std::size_t>()});
        }
        return MnistConfig(j.at("image_side").get<std::size_t>(), std::move(convs),
                           web_config_from_json(j.at("web")));
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad MNIST config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("bad MNIST config: ") + e.what());
    }
}

namespace {

CheckpointTensor capture(std::string name, const Tensor<float>& t) {
    return CheckpointTensor{std::move(name), t.shape(),
                            std::vector<float>(t.data().begin(), t.data().end())};
}

Tensor<float> restore(const Checkpoint& checkpoint, std::string_view name, const Shape& shape) {
    const CheckpointTensor& t = checkpoint.tensor(name);
    if (t.shape != shape) {
        throw FormatError("checkpoint tensor '" + std::string(name) + "' has shape " +
                          shape_string(t.shape) + ", expected " + shape_string(shape));
    }
    return Tensor<float>(t.shape, t.values, true);
}

void require_task(const Checkpoint& checkpoint, std::string_view task) {
    if (!checkpoint.config.is_object() || !checkpoint.config.contains("task") ||
        checkpoint.config["task"] != task) {
        throw FormatError("checkpoint is not a " + std::string(task) + " model");
    }
}

} // namespace

Checkpoint make_checkpoint(const TitanicModel<float>& model, const json& extra) {
    Checkpoint checkpoint;
    checkpoint.config = extra.is_object() ? extra : json::object();
    checkpoint.config["task"] = "titanic";
    checkpoint.config["web"] = web_config_to_json(model.config());
    checkpoint.tensors.push_back(capture("web.weight", model.web().weight));
    checkpoint.tensors.push_back(capture("web.bias", model.web().bias));
    return checkpoint;
}

Checkpoint make_checkpoint(const MnistModel<float>& model, const json& extra) {
    Checkpoint checkpoint;
    checkpoint.config = extra.is_object() ? extra : json::object();
    checkpoint.config["task"] = "mnist";
    checkpoint.config["mnist"] = mnist_config_to_json(model.config());
    for (std::size_t l = 0; l < model.convs().size(); ++l) {
        checkpoint.tensors.push_back(
            capture("conv" + std::to_string(l + 1) + ".kernel", model.convs()[l].kernel));
    }
    for (std::size_t l = 0; l < model.convs().size(); ++l) {
        checkpoint.tensors.push_back(
            capture("conv" + std::to_string(l + 1) + ".bias", model.convs()[l].bias));
    }
    checkpoint.tensors.push_back(capture("web.weight", model.web().weight));
    checkpoint.tensors.push_back(capture("web.bias", model.web().bias));
    return checkpoint;
}

TitanicModel<float> titanic_model_from(const Checkpoint& checkpoint) {
    require_task(checkpoint, "titanic");
    const WebConfig config = web_config_from_json(checkpoint.config["web"]);
    const std::size_t q = config.neurons();
    WebParams<float> web{restore(checkpoint, "web.weight", Shape{q, q, q}),
                         restore(checkpoint, "web.bias", Shape{q, q})};
    try {
        return TitanicModel<float>(config, std::move(web));
    } catch (const ValidationError& e) {
        throw FormatError(std::string("checkpoint holds an invalid Titanic model: ") + e.what());
    }
}

MnistModel<float> mnist_model_from(const Checkpoint& checkpoint) {
    require_task(checkpoint, "mnist");
    MnistConfig config = mnist_config_from_json(checkpoint.config["mnist"]);
    std::vector<ConvLayer<float>> convs;
    for (std::size_t l = 0; l < config.convs().size(); ++l) {
        const ConvSpec& c = config.convs()[l];
        const std::string prefix = "conv" + std::to_string(l + 1);
        convs.push_back(ConvLayer<float>{
            c, restore(checkpoint, prefix + ".kernel",
                       Shape{c.out_channels, c.in_channels, c.kernel, c.kernel}),
            restore(checkpoint, prefix + ".bias", Shape{c.out_channels})});
    }
    const std::size_t q = config.web().neurons();
    WebParams<float> web{restore(checkpoint, "web.weight", Shape{q, q, q}),
                         restore(checkpoint, "web.bias", Shape{q, q})};
    return MnistModel<float>(std::move(config), std::move(convs), std::move(web));
}

} // namespace webnn
