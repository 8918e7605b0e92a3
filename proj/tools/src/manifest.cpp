#include "manifest.hpp"

#include <fstream>

#include "nlvae/error.hpp"

namespace nlvae::cli {

using nlohmann::json;

json to_json(const RunManifest& m) {
  json j = {{"command", m.command},
            {"options", m.options},
            {"inputs", m.inputs},
            {"out_dir", m.out_dir.string()},
            {"seed", m.seed},
            {"tool_version", m.tool_version},
            {"started_at", m.started_at},
            {"status", m.status}};
  if (m.finished_at) j["finished_at"] = *m.finished_at;
  if (m.error) j["error"] = *m.error;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.options = j.at("options");
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.out_dir = j.value("out_dir", std::string{});
    m.seed = j.value("seed", std::uint64_t{0});
    m.tool_version = j.value("tool_version", std::string{});
    m.started_at = j.value("started_at", std::string{});
    if (j.contains("finished_at")) m.finished_at = j.at("finished_at").get<std::string>();
    m.status = j.value("status", std::string{"unknown"});
    if (j.contains("error")) m.error = j.at("error").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const RunManifest& manifest) {
  std::filesystem::create_directories(manifest.out_dir);
  const auto path = manifest.out_dir / kManifestFile;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(manifest).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / kManifestFile : path;
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read manifest " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + file.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace nlvae::cli
