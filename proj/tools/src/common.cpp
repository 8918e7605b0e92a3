#include "common.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <ostream>

#include <fmt/format.h>

namespace nlvae::cli {

Precision parse_precision(const std::string& text) {
  if (text == "f32") return Precision::kF32;
  if (text == "f64") return Precision::kF64;
  throw ConfigError("unknown precision '" + text + "' (expected f32 or f64)");
}

const char* to_string(Precision precision) { return precision == Precision::kF32 ? "f32" : "f64"; }

Canvas parse_canvas(const std::string& text) {
  if (text == "resize256") return Canvas::kResize256;
  if (text == "native") return Canvas::kNative;
  throw ConfigError("unknown canvas '" + text + "' (expected resize256 or native)");
}

const char* to_string(Canvas canvas) { return canvas == Canvas::kResize256 ? "resize256" : "native"; }

void Console::info(const std::string& line) {
  std::lock_guard lock(mutex_);
  out_ << line << '\n' << std::flush;
}

void Console::warn(const std::string& line) {
  std::lock_guard lock(mutex_);
  err_ << line << '\n' << std::flush;
}

std::string tool_version() { return NLVAE_TOOL_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Image load_reference(const std::filesystem::path& path, Canvas canvas, int scale) {
  return crop_to_multiple(prepare_canvas(load_image(path), canvas), scale);
}

}  // namespace nlvae::cli
