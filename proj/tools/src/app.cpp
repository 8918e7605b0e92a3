#include "app.hpp"

#include <functional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "manifest.hpp"

namespace nlvae::cli {

namespace {

/// Flags shared by every command that trains, bound onto a TrainConfig.
/// Values that need conversion are staged here and applied after parsing.
class TrainFlags {
 public:
  TrainFlags(CLI::App* app, TrainConfig& config) : config_(config) {
    app->add_option("--scale", config.scale, "Upscaling factor (3, 4, 8 or any integer >= 2)")->capture_default_str();
    beta_ = app->add_option("--beta", beta_value_, "KL weight; default is the per-scale table, then 500");
    app->add_option("--alpha", config.alpha, "Constant added to the objective")->capture_default_str();
    app->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
    app->add_option("--lr", config.learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--minibatch", config.minibatch, "Pseudo pairs per epoch")->capture_default_str();
    app->add_option("--crop", config.crop, "Crop side at input scale")->capture_default_str();
    app->add_option("--seed", config.seed, "Random seed")->capture_default_str();
    app->add_option("--optimizer", config.optimizer, "adam, sgd or rmsprop")
        ->check(CLI::IsMember({"adam", "sgd", "rmsprop"}))
        ->capture_default_str();
    app->add_option("--loss", loss_, "Reconstruction loss: l2 or l1")->check(CLI::IsMember({"l1", "l2"}));
    app->add_option("--kl", kl_, "KL sign convention: standard or printed")
        ->check(CLI::IsMember({"standard", "printed"}));
    app->add_option("--down-kernel", kernel_, "Degradation kernel: bicubic, bilinear or box")
        ->check(CLI::IsMember({"bicubic", "bilinear", "box"}));
    app->add_flag("--augment,!--no-augment", config.augment, "Random flips and rotations of crops");
    clip_ = app->add_option("--clip-norm", clip_value_, "Clip the joint gradient norm");
    app->add_flag("--early-stop", config.early_stop, "Stop when the loss plateaus");
    app->add_option("--patience", config.patience, "Early-stop patience in epochs")->capture_default_str();
    app->add_option("--checkpoint-every", config.checkpoint_every, "Periodic checkpoint cadence (0: final only)");
    encoder_ = app->add_option("--encoder-blocks", encoder_blocks_, "Encoder non-local blocks")
                   ->check(CLI::PositiveNumber);
    decoder_ = app->add_option("--decoder-blocks", decoder_blocks_, "Decoder non-local blocks")
                   ->check(CLI::PositiveNumber);
  }

  void apply() {
    if (beta_->count()) config_.beta = beta_value_;
    if (clip_->count()) config_.clip_norm = clip_value_;
    if (!loss_.empty()) config_.loss = loss_ == "l1" ? ReconstructionLoss::kL1 : ReconstructionLoss::kL2;
    if (!kl_.empty()) config_.kl = kl_ == "printed" ? KlConvention::kPrinted : KlConvention::kStandard;
    if (kernel_ == "bilinear") config_.down_kernel = ResampleKernel::kBilinear;
    if (kernel_ == "box") config_.down_kernel = ResampleKernel::kBox;
    if (kernel_ == "bicubic") config_.down_kernel = ResampleKernel::kBicubic;
    if (encoder_->count() || decoder_->count()) {
      const int enc = encoder_->count() ? encoder_blocks_ : static_cast<int>(config_.model.encoder_widths.size());
      const int dec = decoder_->count() ? decoder_blocks_ : static_cast<int>(config_.model.decoder_widths.size());
      const ModelConfig shaped = ModelConfig::with_block_counts(enc, dec);
      config_.model.encoder_widths = shaped.encoder_widths;
      config_.model.decoder_widths = shaped.decoder_widths;
    }
    config_.validate();
  }

 private:
  TrainConfig& config_;
  double beta_value_ = 0;
  double clip_value_ = 0;
  int encoder_blocks_ = 5;
  int decoder_blocks_ = 9;
  std::string loss_, kl_, kernel_;
  CLI::Option* beta_ = nullptr;
  CLI::Option* clip_ = nullptr;
  CLI::Option* encoder_ = nullptr;
  CLI::Option* decoder_ = nullptr;
};

/// Options every subcommand carries: output directory and manifest replay.
struct RunFlags {
  std::string out = "out";
  std::string from_manifest;
  CLI::Option* out_opt = nullptr;

  void add(CLI::App* app) {
    out_opt = app->add_option("--out", out, "Output directory")->capture_default_str();
    app->add_option("--from-manifest", from_manifest,
                    "Repeat the run recorded in a manifest (file or run directory); other flags except --out "
                    "are ignored")
        ->check(CLI::ExistingPath);
  }

  /// The manifest's options when replaying, else nullopt. Replays write to
  /// the manifest's directory unless --out is given.
  std::optional<nlohmann::json> replay(const std::string& command) {
    if (from_manifest.empty()) return std::nullopt;
    const RunManifest m = read_manifest(from_manifest);
    if (m.command != command) {
      throw ConfigError(fmt::format("manifest records a '{}' run, not '{}'", m.command, command));
    }
    if (!out_opt->count()) out = m.out_dir.string();
    return std::optional<nlohmann::json>(std::in_place, m.options);
  }
};

RunManifest make_manifest(const std::string& command, nlohmann::json options, std::vector<std::string> inputs,
                          const std::string& out, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.options = std::move(options);
  m.inputs = std::move(inputs);
  m.out_dir = out;
  m.seed = seed;
  return m;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zero-shot single-image super-resolution with a non-local variational autoencoder"};
  // Repeated flags: the last one wins, so wrappers can append overrides.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", tool_version());
  app.set_config("--config", "", "TOML or INI file; keys go under [train], [benchmark], ... sections");
  app.require_subcommand(1);
  Console console(out, err);

  // train
  TrainOptions train;
  RunFlags train_run;
  std::string train_input, train_hr, train_precision = "f32", train_canvas = "resize256";
  CLI::App* train_cmd = app.add_subcommand("train", "Train on one image and write its super-resolved output");
  auto* input_opt = train_cmd->add_option("--input", train_input, "Low-resolution PNG")->check(CLI::ExistingFile);
  auto* hr_opt = train_cmd->add_option("--hr", train_hr, "High-resolution PNG (reference, or source when --input is absent)")
                     ->check(CLI::ExistingFile);
  train_cmd->add_flag("--fixture", train.fixture, "Use the bundled synthetic image as the reference");
  train_cmd->add_option("--progress-every", train.progress_every, "Progress line cadence in epochs (0: off)");
  TrainFlags train_flags(train_cmd, train.config);
  train_cmd->add_option("--precision", train_precision, "Floating-point mode")->check(CLI::IsMember({"f32", "f64"}));
  train_cmd->add_option("--canvas", train_canvas, "resize256 or native (applies when the input is derived from --hr)")
      ->check(CLI::IsMember({"resize256", "native"}));
  train_run.add(train_cmd);

  // benchmark
  BenchmarkOptions bench;
  RunFlags bench_run;
  std::string bench_precision = "f32", bench_canvas = "resize256";
  CLI::App* bench_cmd = app.add_subcommand("benchmark", "Score a directory of high-resolution images");
  bench_cmd->add_option("--dataset,dataset", bench.dataset, "Directory of high-resolution PNGs");
  bench_cmd->add_option("--label", bench.label, "Dataset name for the table");
  bench_cmd->add_option("--workers", bench.workers, "Concurrent images")->check(CLI::PositiveNumber);
  bench_cmd->add_flag("--baseline-only", bench.baseline_only, "Only score bicubic upscaling");
  TrainFlags bench_flags(bench_cmd, bench.config);
  bench_cmd->add_option("--precision", bench_precision, "Floating-point mode")->check(CLI::IsMember({"f32", "f64"}));
  bench_cmd->add_option("--canvas", bench_canvas, "resize256 or native")->check(CLI::IsMember({"resize256", "native"}));
  bench_run.add(bench_cmd);

  // sweep
  SweepOptions sweep;
  RunFlags sweep_run;
  std::string sweep_axis, sweep_precision = "f32", sweep_canvas = "native";
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Train once per value of one axis and compare");
  sweep_cmd->add_option("--axis", sweep_axis, "loss, optimizer, encoder_blocks, decoder_blocks or beta")
      ->check(CLI::IsMember({"loss", "optimizer", "encoder_blocks", "decoder_blocks", "beta"}));
  sweep_cmd->add_option("--values", sweep.values, "Axis values (default: the full axis)");
  sweep_cmd->add_option("--hr", sweep.hr, "Reference images (default: the bundled fixture)")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--workers", sweep.workers, "Concurrent runs")->check(CLI::PositiveNumber);
  TrainFlags sweep_flags(sweep_cmd, sweep.config);
  sweep_cmd->add_option("--precision", sweep_precision, "Floating-point mode")->check(CLI::IsMember({"f32", "f64"}));
  sweep_cmd->add_option("--canvas", sweep_canvas, "resize256 or native")->check(CLI::IsMember({"resize256", "native"}));
  sweep_run.add(sweep_cmd);

  // cost
  CostOptions cost;
  RunFlags cost_run;
  CLI::App* cost_cmd = app.add_subcommand("cost", "Per-layer weight and multiply-accumulate counts");
  cost_cmd->add_option("--K", cost.k, "Kernel side for the reduction-factor row")->check(CLI::PositiveNumber);
  cost_cmd->add_option("--n-in", cost.n_in, "Input channels for the reduction-factor row")->check(CLI::PositiveNumber);
  cost_cmd->add_option("--p-out", cost.p_out, "Output channels for the reduction-factor row")
      ->check(CLI::PositiveNumber);
  cost_cmd->add_option("--m", cost.m_spatial, "Output side for the reduction-factor row")->check(CLI::PositiveNumber);
  cost_cmd->add_option("--height", cost.height, "Model input height")->check(CLI::PositiveNumber);
  cost_cmd->add_option("--width", cost.width, "Model input width")->check(CLI::PositiveNumber);
  cost_cmd->add_option("--encoder-blocks", cost.encoder_blocks, "Encoder blocks")->check(CLI::PositiveNumber);
  cost_cmd->add_option("--decoder-blocks", cost.decoder_blocks, "Decoder blocks")->check(CLI::PositiveNumber);
  cost_cmd->add_flag("--csv", cost.csv, "Print CSV instead of a text table");
  cost_run.add(cost_cmd);

  // metrics
  MetricsOptions metrics;
  RunFlags metrics_run;
  std::string metrics_channel = "Y";
  CLI::App* metrics_cmd = app.add_subcommand("metrics", "PSNR and SSIM of images against references");
  metrics_cmd->add_option("pred", metrics.pred, "Predicted image or directory")->check(CLI::ExistingPath);
  metrics_cmd->add_option("ref", metrics.ref, "Reference image or directory")->check(CLI::ExistingPath);
  metrics_cmd->add_option("--channel", metrics_channel, "Y or RGB")->check(CLI::IsMember({"Y", "RGB"}));
  metrics_cmd->add_option("--shave", metrics.shave, "Border pixels excluded on each side")
      ->check(CLI::NonNegativeNumber);
  metrics_cmd->add_option("--scale", metrics.scale, "Scale recorded in the report");
  metrics_run.add(metrics_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train_cmd->parsed()) {
      if (auto replay = train_run.replay("train")) {
        train = train_options_from_json(*replay);
      } else {
        train_flags.apply();
        if (input_opt->count()) train.input = train_input;
        if (hr_opt->count()) train.hr = train_hr;
        train.precision = parse_precision(train_precision);
        train.canvas = parse_canvas(train_canvas);
      }
      auto m = make_manifest("train", to_json(train), train.inputs(), train_run.out, train.config.seed);
      return with_manifest(m, [&] { return cmd_train(train, train_run.out, console); });
    }
    if (bench_cmd->parsed()) {
      if (auto replay = bench_run.replay("benchmark")) {
        bench = benchmark_options_from_json(*replay);
      } else {
        if (bench.dataset.empty()) throw ConfigError("benchmark needs a dataset directory");
        bench_flags.apply();
        bench.precision = parse_precision(bench_precision);
        bench.canvas = parse_canvas(bench_canvas);
      }
      auto m = make_manifest("benchmark", to_json(bench), {bench.dataset}, bench_run.out, bench.config.seed);
      return with_manifest(m, [&] { return cmd_benchmark(bench, bench_run.out, console); });
    }
    if (sweep_cmd->parsed()) {
      if (auto replay = sweep_run.replay("sweep")) {
        sweep = sweep_options_from_json(*replay);
      } else {
        if (sweep_axis.empty()) throw ConfigError("sweep needs --axis");
        sweep.axis = parse_sweep_axis(sweep_axis);
        sweep_flags.apply();
        sweep.precision = parse_precision(sweep_precision);
        sweep.canvas = parse_canvas(sweep_canvas);
      }
      auto m = make_manifest("sweep", to_json(sweep), sweep.hr, sweep_run.out, sweep.config.seed);
      return with_manifest(m, [&] { return cmd_sweep(sweep, sweep_run.out, console); });
    }
    if (cost_cmd->parsed()) {
      if (auto replay = cost_run.replay("cost")) cost = cost_options_from_json(*replay);
      auto m = make_manifest("cost", to_json(cost), {}, cost_run.out, 0);
      return with_manifest(m, [&] { return cmd_cost(cost, cost_run.out, console); });
    }
    if (metrics_cmd->parsed()) {
      if (auto replay = metrics_run.replay("metrics")) {
        metrics = metrics_options_from_json(*replay);
      } else {
        if (metrics.pred.empty() || metrics.ref.empty()) throw ConfigError("metrics needs a prediction and a reference");
        metrics.channel = metrics_channel == "RGB" ? MetricChannel::kRgb : MetricChannel::kLuma;
      }
      auto m = make_manifest("metrics", to_json(metrics), {metrics.pred, metrics.ref}, metrics_run.out, 0);
      return with_manifest(m, [&] { return cmd_metrics(metrics, metrics_run.out, console); });
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace nlvae::cli
