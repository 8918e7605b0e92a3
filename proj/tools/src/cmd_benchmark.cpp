#include <fstream>

#include <fmt/format.h>

#include "commands.hpp"
#include "nlvae/pipeline.hpp"

namespace nlvae::cli {

using nlohmann::json;

json to_json(const BenchmarkOptions& o) {
  return {{"dataset", o.dataset},         {"label", o.label},
          {"precision", to_string(o.precision)}, {"canvas", to_string(o.canvas)},
          {"workers", o.workers},         {"baseline_only", o.baseline_only},
          {"progress_every", o.progress_every},  {"config", to_json(o.config)}};
}

BenchmarkOptions benchmark_options_from_json(const json& j) {
  BenchmarkOptions o;
  try {
    o.dataset = j.at("dataset").get<std::string>();
    o.label = j.value("label", std::string{});
    o.precision = parse_precision(j.value("precision", std::string("f32")));
    o.canvas = parse_canvas(j.value("canvas", std::string("resize256")));
    o.workers = j.value("workers", 1);
    o.baseline_only = j.value("baseline_only", false);
    o.progress_every = j.value("progress_every", 0);
    o.config = train_config_from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("benchmark options: ") + e.what());
  }
  return o;
}

namespace {

struct Scores {
  double psnr = 0;
  double ssim = 0;
};

Scores score(const Image& upscaled, const Image& hr, int shave) {
  const Image q = quantize8(upscaled);
  return {psnr(q, hr, MetricChannel::kLuma, shave), ssim(q, hr, MetricChannel::kLuma, shave)};
}

template <typename T>
Scores train_and_score(const Image& lr, const Image& hr, const BenchmarkOptions& o,
                       const std::optional<path>& image_dir) {
  TrainIo io;
  io.out_dir = image_dir;
  const auto result = train_single_image<T>(lr, std::nullopt, o.config, io);
  return score(super_resolve(lr, result.model, o.config.scale), hr, o.config.scale);
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkOptions& o, const std::optional<path>& out_dir, Console& console) {
  o.config.validate();
  const auto files = list_images(o.dataset);
  if (files.empty()) throw ConfigError("no PNG images in " + o.dataset);
  const int scale = o.config.scale;
  const int shave = scale;

  std::vector<std::optional<MetricRow>> rows(files.size());
  std::vector<std::optional<std::string>> errors(files.size());
  parallel_for(static_cast<int>(files.size()), o.workers, [&](int i) {
    const std::string name = files[i].stem().string();
    try {
      const Image hr = load_reference(files[i], o.canvas, scale);
      // Both methods see the 8-bit LR image and are scored on 8-bit outputs,
      // as if every image went through a PNG file.
      const Image lr = quantize8(degrade(hr, o.config.degradation()));
      const Scores bicubic = score(upscale_bicubic(lr, scale), hr, shave);
      MetricRow row;
      row.name = name;
      row.scale = scale;
      row.baseline_psnr = bicubic.psnr;
      row.baseline_ssim = bicubic.ssim;
      if (o.baseline_only) {
        row.psnr = *row.baseline_psnr;
        row.ssim = *row.baseline_ssim;
        row.baseline_psnr.reset();
        row.baseline_ssim.reset();
      } else {
        std::optional<path> image_dir;
        if (out_dir) image_dir = *out_dir / "images" / name;
        const Scores s = o.precision == Precision::kF32 ? train_and_score<float>(lr, hr, o, image_dir)
                                                        : train_and_score<double>(lr, hr, o, image_dir);
        row.psnr = s.psnr;
        row.ssim = s.ssim;
      }
      console.info(fmt::format("{:<16} {:>7.2f} dB  {:.4f}", name, row.psnr, row.ssim));
      rows[i] = row;
    } catch (const std::exception& e) {
      errors[i] = e.what();
      console.warn(fmt::format("{}: failed: {}", name, e.what()));
    }
  });

  BenchmarkResult result;
  std::vector<MetricRow> ok;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (rows[i]) ok.push_back(*rows[i]);
    if (errors[i]) result.failures.push_back(files[i].stem().string() + ": " + *errors[i]);
  }
  if (ok.empty()) throw Error(fmt::format("all {} images failed", files.size()));
  result.report = benchmark_aggregate(std::move(ok), MetricChannel::kLuma, shave);
  if (o.baseline_only) result.report.method = "Bicubic";
  return result;
}

int cmd_benchmark(const BenchmarkOptions& o, const path& out_dir, Console& console) {
  const BenchmarkResult result = run_benchmark(o, out_dir, console);
  const std::string label = o.label.empty() ? path(o.dataset).filename().string() : o.label;
  const std::string table = result.report.to_markdown(label);
  std::ofstream(out_dir / "metrics.csv") << result.report.to_csv();
  std::ofstream(out_dir / "table.md") << table;
  if (!result.failures.empty()) {
    std::ofstream failures(out_dir / "failures.txt");
    for (const auto& f : result.failures) failures << f << '\n';
  }
  console.info("\n" + table);
  if (!result.failures.empty()) {
    console.warn(fmt::format("{} of {} images failed (see failures.txt)", result.failures.size(),
                             result.failures.size() + result.report.rows.size()));
    return kExitPartial;
  }
  return kExitOk;
}

}  // namespace nlvae::cli
