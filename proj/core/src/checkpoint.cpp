#include "nlvae/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace nlvae {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename T>
json encode_tensor(const std::string& name, const Tensor<T>& t) {
  const auto bytes = std::as_bytes(t.values());
  return {{"name", name},
          {"shape", t.shape()},
          {"dtype", dtype_name<T>()},
          {"data", base64_encode({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()})}};
}

template <typename Src, typename T>
std::vector<T> decode_values(const std::vector<std::uint8_t>& raw, std::size_t count) {
  if (raw.size() != count * sizeof(Src)) throw IoError("checkpoint: payload size does not match shape");
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Src v;
    std::memcpy(&v, raw.data() + i * sizeof(Src), sizeof(Src));
    out[i] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
std::vector<T> decode_payload(const json& entry, const Shape& expected, const std::string& name) {
  const Shape shape = entry.at("shape").get<Shape>();
  if (shape != expected) {
    throw IoError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                  shape_str(expected));
  }
  const auto raw = base64_decode(entry.at("data").get<std::string>());
  const auto dtype = entry.at("dtype").get<std::string>();
  const auto count = static_cast<std::size_t>(shape_numel(shape));
  if (dtype == "f32") return decode_values<float, T>(raw, count);
  if (dtype == "f64") return decode_values<double, T>(raw, count);
  throw IoError("checkpoint: unknown dtype '" + dtype + "'");
}

const char* upsample_name(UpsampleMode m) { return m == UpsampleMode::kNearest ? "nearest" : "bilinear"; }
const char* mid_order_name(MidPathOrder m) {
  return m == MidPathOrder::kPointwiseFirst ? "pointwise_first" : "conv_first";
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::array<int, 256> lookup;
  lookup.fill(-1);
  for (int k = 0; k < 64; ++k) lookup[static_cast<unsigned char>(kAlphabet[k])] = k;
  if (text.size() % 4 != 0) throw IoError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = lookup[static_cast<unsigned char>(c)];
      if (d < 0 || pad > 0) throw IoError("base64: invalid character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

json to_json(const ModelConfig& c) {
  return {{"encoder_widths", c.encoder_widths},
          {"decoder_widths", c.decoder_widths},
          {"latent_dim", c.latent_dim},
          {"upsample_stages", c.upsample_stages},
          {"leaky_slope", c.leaky_slope},
          {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum},
          {"upsample", upsample_name(c.upsample)},
          {"mid_order", mid_order_name(c.mid_order)},
          {"condition_on_input", c.condition_on_input},
          {"zero_init_heads", c.zero_init_heads}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    if (j.contains("encoder_widths")) c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
    if (j.contains("decoder_widths")) c.decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.upsample_stages = j.value("upsample_stages", c.upsample_stages);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.bn_eps = j.value("bn_eps", c.bn_eps);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.condition_on_input = j.value("condition_on_input", c.condition_on_input);
    c.zero_init_heads = j.value("zero_init_heads", c.zero_init_heads);
    const auto up = j.value("upsample", std::string(upsample_name(c.upsample)));
    if (up == "nearest") {
      c.upsample = UpsampleMode::kNearest;
    } else if (up == "bilinear") {
      c.upsample = UpsampleMode::kBilinear;
    } else {
      throw ConfigError("model config: unknown upsample mode '" + up + "'");
    }
    const auto order = j.value("mid_order", std::string(mid_order_name(c.mid_order)));
    if (order == "pointwise_first") {
      c.mid_order = MidPathOrder::kPointwiseFirst;
    } else if (order == "conv_first") {
      c.mid_order = MidPathOrder::kConvFirst;
    } else {
      throw ConfigError("model config: unknown mid_order '" + order + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
json checkpoint_to_json(const TrainedModel<T>& model) {
  json tensors = json::array();
  for (const auto& p : model.params.parameters()) tensors.push_back(encode_tensor(p.name, p.tensor));
  json buffers = json::array();
  // buffers() hands out mutable pointers but does not modify anything.
  for (const auto& b : const_cast<NlvaeParams<T>&>(model.params).buffers()) {
    const auto n = static_cast<std::int64_t>(b.stats->mean.size());
    buffers.push_back({{"name", b.name},
                       {"mean", encode_tensor(b.name + ".mean", Tensor<T>::from_vector({n}, b.stats->mean))},
                       {"var", encode_tensor(b.name + ".var", Tensor<T>::from_vector({n}, b.stats->var))}});
  }
  return {{"format", "nlvae-checkpoint"},
          {"version", kCheckpointVersion},
          {"precision", dtype_name<T>()},
          {"scale", model.scale},
          {"model", to_json(model.params.config)},
          {"train", model.train_config},
          {"tensors", std::move(tensors)},
          {"buffers", std::move(buffers)}};
}

template <typename T>
TrainedModel<T> checkpoint_from_json(const json& doc) {
  try {
    if (!doc.contains("version")) throw IoError("checkpoint: missing version field");
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw IoError("checkpoint: unsupported version " + std::to_string(version));
    }
    TrainedModel<T> model;
    model.scale = doc.at("scale").get<int>();
    model.train_config = doc.value("train", json::object());
    model.params = init_params<T>(model_config_from_json(doc.at("model")), 0);

    auto params = model.params.parameters();
    const auto& tensors = doc.at("tensors");
    if (tensors.size() != params.size()) {
      throw IoError("checkpoint: " + std::to_string(tensors.size()) + " tensors stored, model has " +
                    std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = tensors[i];
      if (entry.at("name").get<std::string>() != params[i].name) {
        throw IoError("checkpoint: expected tensor '" + params[i].name + "', found '" +
                      entry.at("name").get<std::string>() + "'");
      }
      const auto values = decode_payload<T>(entry, params[i].tensor.shape(), params[i].name);
      std::copy(values.begin(), values.end(), params[i].tensor.values_mut().begin());
    }

    auto buffers = model.params.buffers();
    const auto& stored = doc.at("buffers");
    if (stored.size() != buffers.size()) throw IoError("checkpoint: batch-norm statistics count mismatch");
    for (std::size_t i = 0; i < buffers.size(); ++i) {
      if (stored[i].at("name").get<std::string>() != buffers[i].name) {
        throw IoError("checkpoint: expected statistics '" + buffers[i].name + "'");
      }
      const Shape shape{static_cast<std::int64_t>(buffers[i].stats->mean.size())};
      buffers[i].stats->mean = decode_payload<T>(stored[i].at("mean"), shape, buffers[i].name);
      buffers[i].stats->var = decode_payload<T>(stored[i].at("var"), shape, buffers[i].name);
    }
    return model;
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed document: ") + e.what());
  }
}

template <typename T>
void save_checkpoint(const TrainedModel<T>& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << checkpoint_to_json(model).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
TrainedModel<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json<T>(doc);
}

template json checkpoint_to_json<float>(const TrainedModel<float>&);
template json checkpoint_to_json<double>(const TrainedModel<double>&);
template TrainedModel<float> checkpoint_from_json<float>(const json&);
template TrainedModel<double> checkpoint_from_json<double>(const json&);
template void save_checkpoint<float>(const TrainedModel<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const TrainedModel<double>&, const std::filesystem::path&);
template TrainedModel<float> load_checkpoint<float>(const std::filesystem::path&);
template TrainedModel<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace nlvae
