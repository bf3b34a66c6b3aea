#pragma once

// Binary model checkpoints.
//
// Layout (all integers little-endian):
//   "WNN1"              4 bytes magic
//   u32 version         currently 1
//   u32 header_length   bytes of the JSON header that follows
//   header              UTF-8 JSON {"config": {...}, "tensors": [manifest...]}
//   payload             raw little-endian f32 values
//
// Each manifest entry is {"name", "shape", "dtype": "f32", "offset"} where
// offset is in bytes from the start of the payload. Tensors are stored in
// manifest order: conv kernels, conv biases, web W, web b.

#include "webnn/models.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace webnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    nlohmann::json config = nlohmann::json::object();
    std::vector<CheckpointTensor> tensors;

    /// Throws FormatError when no tensor has this name.
    const CheckpointTensor& tensor(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws FormatError on bad magic, version, header or truncated payload.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json web_config_to_json(const WebConfig& config);
WebConfig web_config_from_json(const nlohmann::json& j);
nlohmann::json mnist_config_to_json(const MnistConfig& config);
MnistConfig mnist_config_from_json(const nlohmann::json& j);

/// config = {"task": "titanic", "web": {...}} merged with `extra`.
Checkpoint make_checkpoint(const TitanicModel<float>& model,
                           const nlohmann::json& extra = nlohmann::json::object());
/// config = {"task": "mnist", "mnist": {...}} merged with `extra`.
Checkpoint make_checkpoint(const MnistModel<float>& model,
                           const nlohmann::json& extra = nlohmann::json::object());

TitanicModel<float> titanic_model_from(const Checkpoint& checkpoint);
MnistModel<float> mnist_model_from(const Checkpoint& checkpoint);

} // namespace webnn
