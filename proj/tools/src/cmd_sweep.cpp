#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "commands.hpp"
#include "nlvae/pipeline.hpp"
#include "nlvae/plot.hpp"

namespace nlvae::cli {

using nlohmann::json;

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "loss") return SweepAxis::kLoss;
  if (text == "optimizer") return SweepAxis::kOptimizer;
  if (text == "encoder_blocks") return SweepAxis::kEncoderBlocks;
  if (text == "decoder_blocks") return SweepAxis::kDecoderBlocks;
  if (text == "beta") return SweepAxis::kBeta;
  throw ConfigError("unknown sweep axis '" + text +
                    "' (expected loss, optimizer, encoder_blocks, decoder_blocks or beta)");
}

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kLoss: return "loss";
    case SweepAxis::kOptimizer: return "optimizer";
    case SweepAxis::kEncoderBlocks: return "encoder_blocks";
    case SweepAxis::kDecoderBlocks: return "decoder_blocks";
    case SweepAxis::kBeta: return "beta";
  }
  return "?";
}

std::vector<std::string> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kLoss: return {"l1", "l2"};
    case SweepAxis::kOptimizer: return {"adam", "sgd", "rmsprop"};
    case SweepAxis::kEncoderBlocks: return {"1", "2", "3", "4", "5"};
    case SweepAxis::kDecoderBlocks: return {"5", "6", "7", "8", "9"};
    case SweepAxis::kBeta: return {"0", "150", "200", "300", "500"};
  }
  return {};
}

namespace {

int parse_int(const std::string& s, const char* what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError(fmt::format("{} value '{}' is not an integer", what, s));
  return v;
}

}  // namespace

TrainConfig apply_sweep_value(TrainConfig c, SweepAxis axis, const std::string& value) {
  switch (axis) {
    case SweepAxis::kLoss:
      if (value != "l1" && value != "l2") throw ConfigError("loss value must be l1 or l2, got '" + value + "'");
      c.loss = value == "l1" ? ReconstructionLoss::kL1 : ReconstructionLoss::kL2;
      break;
    case SweepAxis::kOptimizer:
      c.optimizer = value;
      break;
    case SweepAxis::kEncoderBlocks: {
      const int n = parse_int(value, "encoder_blocks");
      const auto decoder = c.model.decoder_widths.size();
      const ModelConfig shaped = ModelConfig::with_block_counts(n, static_cast<int>(decoder));
      c.model.encoder_widths = shaped.encoder_widths;
      break;
    }
    case SweepAxis::kDecoderBlocks: {
      const int n = parse_int(value, "decoder_blocks");
      const auto encoder = c.model.encoder_widths.size();
      const ModelConfig shaped = ModelConfig::with_block_counts(static_cast<int>(encoder), n);
      c.model.decoder_widths = shaped.decoder_widths;
      break;
    }
    case SweepAxis::kBeta: {
      std::size_t used = 0;
      double b = 0;
      try {
        b = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ConfigError("beta value '" + value + "' is not a number");
      c.beta = b;
      break;
    }
  }
  c.validate();
  return c;
}

SweepOptions::SweepOptions() {
  config.scale = 2;
  config.epochs = 300;
}

json to_json(const SweepOptions& o) {
  return {{"axis", to_string(o.axis)},          {"values", o.values.empty() ? default_sweep_values(o.axis) : o.values},
          {"hr", o.hr},                         {"precision", to_string(o.precision)},
          {"canvas", to_string(o.canvas)},      {"workers", o.workers},
          {"config", to_json(o.config)}};
}

SweepOptions sweep_options_from_json(const json& j) {
  SweepOptions o;
  try {
    o.axis = parse_sweep_axis(j.at("axis").get<std::string>());
    o.values = j.value("values", std::vector<std::string>{});
    o.hr = j.value("hr", std::vector<std::string>{});
    o.precision = parse_precision(j.value("precision", std::string("f32")));
    o.canvas = parse_canvas(j.value("canvas", std::string("native")));
    o.workers = j.value("workers", 1);
    o.config = train_config_from_json(j.at("config"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep options: ") + e.what());
  }
  return o;
}

namespace {

std::string opt_cell(const std::optional<double>& v, const char* spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string("-");
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return out;
}

template <typename T>
TrainReport train_as(const Image& lr, const Image& hr, const TrainConfig& config, const std::optional<path>& dir) {
  TrainIo io;
  io.out_dir = dir;
  return train_single_image<T>(lr, hr, config, io).report;
}

}  // namespace

std::string SweepResult::to_markdown() const {
  std::string out = fmt::format("| {} | final L_R | PSNR (dB) | SSIM | bilinear PSNR (dB) | seconds | status |\n",
                                to_string(axis));
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& r : runs) {
    out += fmt::format("| {} | {} | {} | {} | {} | {:.1f} | {} |\n", r.value,
                       r.l_r.empty() ? std::string("-") : fmt::format("{:.4g}", r.l_r.back()),
                       opt_cell(r.psnr, "{:.2f}"), opt_cell(r.ssim, "{:.4f}"), opt_cell(r.bilinear_psnr, "{:.2f}"),
                       r.seconds, r.error ? "failed: " + *r.error : std::string("ok"));
  }
  if (axis == SweepAxis::kDecoderBlocks) {
    const SweepRun* few = nullptr;
    const SweepRun* many = nullptr;
    for (const auto& r : runs) {
      if (r.value == "5") few = &r;
      if (r.value == "9") many = &r;
    }
    if (few && many && few->psnr && many->psnr) {
      out += fmt::format("\nTrend (soft): 9 decoder blocks {} 5 decoder blocks ({:.2f} vs {:.2f} dB)\n",
                         *many->psnr >= *few->psnr ? ">=" : "<", *many->psnr, *few->psnr);
    }
  }
  return out;
}

std::string SweepResult::to_csv() const {
  std::string out = fmt::format("{},final_l_r,psnr,ssim,bilinear_psnr,seconds,status\n", to_string(axis));
  for (const auto& r : runs) {
    out += fmt::format("{},{},{},{},{},{:.3f},{}\n", r.value, r.l_r.empty() ? std::string() : fmt::format("{}", r.l_r.back()),
                       opt_cell(r.psnr, "{}"), opt_cell(r.ssim, "{}"), opt_cell(r.bilinear_psnr, "{}"), r.seconds,
                       r.error ? "failed" : "ok");
  }
  return out;
}

SweepResult run_sweep(const SweepOptions& o, const std::optional<path>& out_dir, Console& console) {
  const std::vector<std::string> values = o.values.empty() ? default_sweep_values(o.axis) : o.values;
  const int scale = o.config.scale;
  std::vector<std::string> names;
  std::vector<Image> references;
  if (o.hr.empty()) {
    names.push_back("fixture");
    references.push_back(crop_to_multiple(synthetic_fixture(), scale));
  } else {
    for (const auto& file : o.hr) {
      names.push_back(path(file).stem().string());
      references.push_back(load_reference(file, o.canvas, scale));
    }
  }
  // Configs are resolved up front so a bad value fails before any training.
  std::vector<TrainConfig> configs;
  for (const auto& v : values) configs.push_back(apply_sweep_value(o.config, o.axis, v));

  SweepResult result;
  result.axis = o.axis;
  result.runs.resize(values.size());
  parallel_for(static_cast<int>(values.size()), o.workers, [&](int i) {
    SweepRun& run = result.runs[i];
    run.value = values[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      double psnr_sum = 0, ssim_sum = 0, bilinear_sum = 0;
      for (std::size_t k = 0; k < references.size(); ++k) {
        const Image lr = quantize8(degrade(references[k], configs[i].degradation()));
        std::optional<path> dir;
        if (out_dir) dir = *out_dir / "runs" / (std::string(to_string(o.axis)) + "-" + safe_name(values[i])) / names[k];
        const TrainReport r = o.precision == Precision::kF32 ? train_as<float>(lr, references[k], configs[i], dir)
                                                             : train_as<double>(lr, references[k], configs[i], dir);
        if (run.l_r.empty() || r.epochs.size() < run.l_r.size()) run.l_r.resize(r.epochs.size());
        for (std::size_t e = 0; e < run.l_r.size(); ++e) run.l_r[e] += r.epochs[e].loss.l_r / references.size();
        psnr_sum += *r.psnr;
        ssim_sum += *r.ssim;
        bilinear_sum += *r.bilinear_psnr;
      }
      const double n = static_cast<double>(references.size());
      run.psnr = psnr_sum / n;
      run.ssim = ssim_sum / n;
      run.bilinear_psnr = bilinear_sum / n;
      console.info(fmt::format("{}={}: PSNR {:.2f} dB, final L_R {:.4g}", to_string(o.axis), values[i], *run.psnr,
                               run.l_r.back()));
    } catch (const std::exception& e) {
      run.error = e.what();
      console.warn(fmt::format("{}={}: failed: {}", to_string(o.axis), values[i], e.what()));
    }
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  return result;
}

int cmd_sweep(const SweepOptions& o, const path& out_dir, Console& console) {
  const SweepResult result = run_sweep(o, out_dir, console);
  std::vector<Series> curves;
  std::vector<Bar> bars;
  for (const auto& r : result.runs) {
    Series s{fmt::format("{}={}", to_string(o.axis), r.value), {}, r.l_r};
    for (std::size_t e = 0; e < r.l_r.size(); ++e) s.x.push_back(static_cast<double>(e + 1));
    curves.push_back(std::move(s));
    if (r.psnr) bars.push_back({r.value, *r.psnr});
  }
  ChartOptions curve_opts{fmt::format("Reconstruction loss by {}", to_string(o.axis)), "epoch", "L_R", true};
  write_text_file(out_dir / "curves.svg", line_chart_svg(curves, curve_opts));
  ChartOptions bar_opts{fmt::format("Final PSNR by {}", to_string(o.axis)), to_string(o.axis), "PSNR (dB)"};
  write_text_file(out_dir / "psnr.svg", bar_chart_svg(bars, bar_opts));
  const std::string table = result.to_markdown();
  write_text_file(out_dir / "table.md", table);
  write_text_file(out_dir / "table.csv", result.to_csv());
  console.info("\n" + table);
  const bool any_failed =
      std::any_of(result.runs.begin(), result.runs.end(), [](const SweepRun& r) { return r.error.has_value(); });
  return any_failed ? kExitPartial : kExitOk;
}

}  // namespace nlvae::cli
