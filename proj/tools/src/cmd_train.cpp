#include <fstream>

#include <fmt/format.h>

#include "commands.hpp"
#include "nlvae/pipeline.hpp"

namespace nlvae::cli {

using nlohmann::json;

std::vector<std::string> TrainOptions::inputs() const {
  std::vector<std::string> out;
  if (input) out.push_back(*input);
  if (hr) out.push_back(*hr);
  return out;
}

json to_json(const TrainOptions& o) {
  return {{"input", o.input ? json(*o.input) : json(nullptr)},
          {"hr", o.hr ? json(*o.hr) : json(nullptr)},
          {"fixture", o.fixture},
          {"precision", to_string(o.precision)},
          {"canvas", to_string(o.canvas)},
          {"progress_every", o.progress_every},
          {"config", to_json(o.config)}};
}

TrainOptions train_options_from_json(const json& j) {
  TrainOptions o;
  try {
    if (j.contains("input") && !j.at("input").is_null()) o.input = j.at("input").get<std::string>();
    if (j.contains("hr") && !j.at("hr").is_null()) o.hr = j.at("hr").get<std::string>();
    o.fixture = j.value("fixture", false);
    o.precision = parse_precision(j.value("precision", std::string("f32")));
    o.canvas = parse_canvas(j.value("canvas", std::string("resize256")));
    o.progress_every = j.value("progress_every", o.progress_every);
    o.config = train_config_from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train options: ") + e.what());
  }
  return o;
}

namespace {

json report_json(const TrainReport& r) {
  json j = {{"epochs_run", r.epochs.size()}, {"early_stopped", r.early_stopped}, {"crop", r.crop},
            {"seconds", r.total_seconds}};
  if (!r.epochs.empty()) {
    j["first_l_r"] = r.epochs.front().loss.l_r;
    j["final_l_r"] = r.epochs.back().loss.l_r;
    j["final_l_kl"] = r.epochs.back().loss.l_kl;
    j["final_total"] = r.epochs.back().loss.total;
  }
  if (r.psnr) j["psnr"] = *r.psnr;
  if (r.ssim) j["ssim"] = *r.ssim;
  if (r.bilinear_psnr) j["bilinear_psnr"] = *r.bilinear_psnr;
  return j;
}

template <typename T>
TrainReport train_as(const Image& lr, const std::optional<Image>& hr, const TrainOptions& o, const path& out_dir,
                     Console& console) {
  TrainIo io;
  io.out_dir = out_dir;
  io.progress = &console.out();
  io.progress_every = o.progress_every;
  return train_single_image<T>(lr, hr, o.config, io).report;
}

}  // namespace

int cmd_train(const TrainOptions& o, const path& out_dir, Console& console) {
  const int sources = (o.input ? 1 : 0) + (o.fixture ? 1 : 0);
  if (sources > 1) throw ConfigError("--input and --fixture are mutually exclusive");
  if (sources == 0 && !o.hr) throw ConfigError("train needs --input, --hr or --fixture");
  if (o.fixture && o.hr) throw ConfigError("--hr and --fixture are mutually exclusive");

  Image lr;
  std::optional<Image> hr;
  if (o.input) {
    // A given low-resolution image is used as is; the canvas only shapes
    // references from which the input is synthesised.
    lr = load_image(*o.input);
    if (o.hr) hr = load_image(*o.hr);
  } else {
    hr = o.fixture ? synthetic_fixture() : load_reference(*o.hr, o.canvas, o.config.scale);
    hr = crop_to_multiple(*hr, o.config.scale);
    lr = quantize8(degrade(*hr, o.config.degradation()));
    save_image(lr, out_dir / "lr.png");
  }
  console.info(fmt::format("training on {}x{} at {}x, beta {}, {} epochs ({})", lr.width, lr.height, o.config.scale,
                           o.config.resolved_beta(), o.config.epochs, to_string(o.precision)));

  const TrainReport report = o.precision == Precision::kF32 ? train_as<float>(lr, hr, o, out_dir, console)
                                                            : train_as<double>(lr, hr, o, out_dir, console);
  std::ofstream(out_dir / "report.json") << report_json(report).dump(2) << '\n';
  console.info(fmt::format("wrote {} ({}x{})", report.output_path->string(), lr.width * o.config.scale,
                           lr.height * o.config.scale));
  if (report.psnr) {
    console.info(fmt::format("PSNR {:.2f} dB  SSIM {:.4f}  (bilinear {:.2f} dB)", *report.psnr, *report.ssim,
                             *report.bilinear_psnr));
  }
  return kExitOk;
}

}  // namespace nlvae::cli
