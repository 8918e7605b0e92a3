#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <string>
#include <vector>

#include "nlvae/error.hpp"
#include "nlvae/image.hpp"
#include "nlvae/pipeline.hpp"

namespace nlvae::cli {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitRuntime = 3, kExitPartial = 4 };

enum class Precision { kF32, kF64 };

Precision parse_precision(const std::string& text);
const char* to_string(Precision precision);
Canvas parse_canvas(const std::string& text);
const char* to_string(Canvas canvas);

/// Streams shared by concurrently running jobs. Lines are written whole.
class Console {
 public:
  Console(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}
  void info(const std::string& line);
  void warn(const std::string& line);
  std::ostream& out() { return out_; }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::mutex mutex_;
};

std::string tool_version();
/// ISO 8601 UTC with seconds resolution.
std::string utc_timestamp();

/// PNG files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// High-resolution image on the working canvas, trimmed to a multiple of `scale`.
Image load_reference(const std::filesystem::path& path, Canvas canvas, int scale);

/// Runs `job(i)` for i in [0, count) on up to `workers` threads.
template <typename Job>
void parallel_for(int count, int workers, Job&& job);

}  // namespace nlvae::cli

#include "common_inl.hpp"
