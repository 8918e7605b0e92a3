#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "nlvae/model.hpp"

namespace nlvae {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; malformed values are a ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// A trained model together with the upscaling factor it was trained for.
template <typename T>
struct TrainedModel {
  NlvaeParams<T> params;
  int scale = 0;
  /// Free-form training configuration echo, stored verbatim.
  nlohmann::json train_config = nlohmann::json::object();
};

/// JSON document holding a version, the model config echo, the scale, every
/// named parameter tensor (shape, dtype, base64 little-endian payload) and
/// the batch-norm running statistics. Round-trips bit-exactly.
template <typename T>
nlohmann::json checkpoint_to_json(const TrainedModel<T>& model);

/// Tensors stored at another precision are converted.
template <typename T>
TrainedModel<T> checkpoint_from_json(const nlohmann::json& doc);

template <typename T>
void save_checkpoint(const TrainedModel<T>& model, const std::filesystem::path& path);

template <typename T>
TrainedModel<T> load_checkpoint(const std::filesystem::path& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace nlvae
