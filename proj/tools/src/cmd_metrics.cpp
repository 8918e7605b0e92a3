#include <fstream>

#include <fmt/format.h>

#include "commands.hpp"

namespace nlvae::cli {

using nlohmann::json;

json to_json(const MetricsOptions& o) {
  return {{"pred", o.pred}, {"ref", o.ref}, {"channel", to_string(o.channel)}, {"shave", o.shave},
          {"scale", o.scale}};
}

MetricsOptions metrics_options_from_json(const json& j) {
  MetricsOptions o;
  try {
    o.pred = j.at("pred").get<std::string>();
    o.ref = j.at("ref").get<std::string>();
    const auto channel = j.value("channel", std::string("Y"));
    if (channel != "Y" && channel != "RGB") throw ConfigError("channel must be Y or RGB");
    o.channel = channel == "Y" ? MetricChannel::kLuma : MetricChannel::kRgb;
    o.shave = j.value("shave", 0);
    o.scale = j.value("scale", 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("metrics options: ") + e.what());
  }
  return o;
}

int cmd_metrics(const MetricsOptions& o, const path& out_dir, Console& console) {
  if (o.shave < 0) throw ConfigError("shave must be >= 0");
  const bool dirs = std::filesystem::is_directory(o.pred);
  if (dirs != std::filesystem::is_directory(o.ref)) {
    throw ConfigError("prediction and reference must both be files or both be directories");
  }
  std::vector<std::pair<path, path>> pairs;
  if (dirs) {
    for (const auto& p : list_images(o.pred)) {
      const path r = path(o.ref) / p.filename();
      if (!std::filesystem::exists(r)) throw ConfigError("no reference for " + p.filename().string());
      pairs.emplace_back(p, r);
    }
    if (pairs.empty()) throw ConfigError("no PNG images in " + o.pred);
  } else {
    pairs.emplace_back(o.pred, o.ref);
  }

  std::vector<MetricRow> rows;
  for (const auto& [p, r] : pairs) {
    const Image a = load_image(p);
    const Image b = load_image(r);
    rows.push_back({p.stem().string(), o.scale, psnr(a, b, o.channel, o.shave), ssim(a, b, o.channel, o.shave),
                    std::nullopt, std::nullopt});
    console.info(fmt::format("{:<16} PSNR {:.4f} dB  SSIM {:.6f}", rows.back().name, rows.back().psnr,
                             rows.back().ssim));
  }
  MetricsReport report = benchmark_aggregate(rows, o.channel, o.shave);
  report.method = "Prediction";
  std::ofstream(out_dir / "metrics.csv") << report.to_csv();
  if (dirs) console.info(fmt::format("mean PSNR {:.4f} dB  SSIM {:.6f}", report.mean_psnr, report.mean_ssim));
  return kExitOk;
}

}  // namespace nlvae::cli
