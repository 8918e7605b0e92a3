#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nlvae::cli {

/// Record of one command invocation. `options` holds every resolved setting,
/// so the run can be repeated from the manifest alone.
struct RunManifest {
  std::string command;
  nlohmann::json options = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started_at;
  std::optional<std::string> finished_at;
  std::string status = "running";  // running, ok, partial, failed
  std::optional<std::string> error;
};

inline constexpr const char* kManifestFile = "manifest.json";

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Writes out_dir/manifest.json, creating the directory.
void write_manifest(const RunManifest& manifest);
/// Accepts the manifest file or the run directory containing it.
RunManifest read_manifest(const std::filesystem::path& path);

/// Writes the manifest, runs `body`, then records the outcome. Exceptions
/// are recorded and rethrown.
template <typename Body>
int with_manifest(RunManifest manifest, Body&& body);

}  // namespace nlvae::cli

#include "common.hpp"

namespace nlvae::cli {

template <typename Body>
int with_manifest(RunManifest manifest, Body&& body) {
  manifest.tool_version = tool_version();
  manifest.started_at = utc_timestamp();
  write_manifest(manifest);
  try {
    const int code = body();
    manifest.status = code == kExitOk ? "ok" : "partial";
    manifest.finished_at = utc_timestamp();
    write_manifest(manifest);
    return code;
  } catch (const std::exception& e) {
    manifest.status = "failed";
    manifest.error = e.what();
    manifest.finished_at = utc_timestamp();
    write_manifest(manifest);
    throw;
  }
}

}  // namespace nlvae::cli
