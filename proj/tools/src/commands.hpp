#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "nlvae/metrics.hpp"
#include "nlvae/trainer.hpp"

namespace nlvae::cli {

using std::filesystem::path;

// train

struct TrainOptions {
  std::optional<std::string> input;  // low-resolution image
  std::optional<std::string> hr;     // high-resolution reference
  bool fixture = false;              // bundled synthetic image as the reference
  TrainConfig config;
  Precision precision = Precision::kF32;
  Canvas canvas = Canvas::kResize256;
  int progress_every = 50;

  std::vector<std::string> inputs() const;
};

nlohmann::json to_json(const TrainOptions& options);
TrainOptions train_options_from_json(const nlohmann::json& j);
int cmd_train(const TrainOptions& options, const path& out_dir, Console& console);

// benchmark

struct BenchmarkOptions {
  std::string dataset;
  std::string label;  // table heading; defaults to the directory name
  TrainConfig config;
  Precision precision = Precision::kF32;
  Canvas canvas = Canvas::kResize256;
  int workers = 1;
  bool baseline_only = false;
  int progress_every = 0;
};

struct BenchmarkResult {
  MetricsReport report;
  /// "name: reason" for every image excluded from the report.
  std::vector<std::string> failures;
};

nlohmann::json to_json(const BenchmarkOptions& options);
BenchmarkOptions benchmark_options_from_json(const nlohmann::json& j);
/// Bicubic scores never touch the trainer. In baseline-only mode the report's
/// main columns hold the bicubic scores. Throws ConfigError on an empty
/// directory and Error when every image fails.
BenchmarkResult run_benchmark(const BenchmarkOptions& options, const std::optional<path>& out_dir, Console& console);
int cmd_benchmark(const BenchmarkOptions& options, const path& out_dir, Console& console);

// sweep

enum class SweepAxis { kLoss, kOptimizer, kEncoderBlocks, kDecoderBlocks, kBeta };

SweepAxis parse_sweep_axis(const std::string& text);
const char* to_string(SweepAxis axis);
std::vector<std::string> default_sweep_values(SweepAxis axis);
/// `base` with exactly the swept field replaced.
TrainConfig apply_sweep_value(TrainConfig base, SweepAxis axis, const std::string& value);

struct SweepOptions {
  SweepAxis axis = SweepAxis::kLoss;
  std::vector<std::string> values;  // empty: the axis defaults
  std::vector<std::string> hr;      // empty: the bundled fixture
  TrainConfig config;
  Precision precision = Precision::kF32;
  Canvas canvas = Canvas::kNative;
  int workers = 1;

  SweepOptions();
};

struct SweepRun {
  std::string value;
  std::vector<double> l_r;  // per epoch, mean over images
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::optional<double> bilinear_psnr;
  double seconds = 0;
  std::optional<std::string> error;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::kLoss;
  std::vector<SweepRun> runs;

  std::string to_markdown() const;
  std::string to_csv() const;
};

nlohmann::json to_json(const SweepOptions& options);
SweepOptions sweep_options_from_json(const nlohmann::json& j);
SweepResult run_sweep(const SweepOptions& options, const std::optional<path>& out_dir, Console& console);
int cmd_sweep(const SweepOptions& options, const path& out_dir, Console& console);

// cost

struct CostOptions {
  int k = 3;
  int n_in = 64;
  int p_out = 64;
  int m_spatial = 256;
  int height = 256;
  int width = 256;
  int encoder_blocks = 5;
  int decoder_blocks = 9;
  bool csv = false;
};

nlohmann::json to_json(const CostOptions& options);
CostOptions cost_options_from_json(const nlohmann::json& j);
int cmd_cost(const CostOptions& options, const path& out_dir, Console& console);

// metrics

struct MetricsOptions {
  std::string pred;  // file or directory
  std::string ref;   // file or directory
  MetricChannel channel = MetricChannel::kLuma;
  int shave = 0;
  int scale = 0;  // label only
};

nlohmann::json to_json(const MetricsOptions& options);
MetricsOptions metrics_options_from_json(const nlohmann::json& j);
int cmd_metrics(const MetricsOptions& options, const path& out_dir, Console& console);

}  // namespace nlvae::cli
