#include "nlvae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <fmt/format.h>

#include "nlvae/metrics.hpp"
#include "nlvae/optim.hpp"
#include "nlvae/pipeline.hpp"

namespace nlvae {

using nlohmann::json;

namespace {

// Minimum image side accepted for training.
constexpr int kMinTrainSide = 16;

const char* loss_name(ReconstructionLoss l) { return l == ReconstructionLoss::kL2 ? "l2" : "l1"; }
const char* kl_name(KlConvention k) { return k == KlConvention::kStandard ? "standard" : "printed"; }
const char* kernel_name(ResampleKernel k) {
  switch (k) {
    case ResampleKernel::kBox: return "box";
    case ResampleKernel::kBilinear: return "bilinear";
    case ResampleKernel::kBicubic: return "bicubic";
  }
  return "?";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (scale < 2) throw ConfigError(fmt::format("scale must be >= 2, got {}", scale));
  if (beta && !(*beta >= 0)) throw ConfigError("beta must be non-negative");
  if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (minibatch < 1) throw ConfigError("minibatch size must be >= 1");
  if (crop < 1) throw ConfigError("crop must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (clip_norm && !(*clip_norm > 0)) throw ConfigError("clip norm must be positive");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(min_delta >= 0)) throw ConfigError("min_delta must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("checkpoint cadence must be >= 0");
  if (optimizer != "adam" && optimizer != "sgd" && optimizer != "rmsprop") {
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected adam, sgd or rmsprop)");
  }
  model.validate();
}

json to_json(const TrainConfig& c) {
  json j = {{"scale", c.scale},
            {"beta", c.resolved_beta()},
            {"beta_explicit", c.beta.has_value()},
            {"alpha", c.alpha},
            {"epochs", c.epochs},
            {"minibatch", c.minibatch},
            {"crop", c.crop},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"optimizer", c.optimizer},
            {"loss", loss_name(c.loss)},
            {"kl", kl_name(c.kl)},
            {"augment", c.augment},
            {"clip_norm", c.clip_norm ? json(*c.clip_norm) : json(nullptr)},
            {"early_stop", c.early_stop},
            {"patience", c.patience},
            {"min_delta", c.min_delta},
            {"checkpoint_every", c.checkpoint_every},
            {"down_kernel", kernel_name(c.down_kernel)},
            {"antialias", c.antialias},
            {"model", to_json(c.model)}};
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.scale = j.value("scale", c.scale);
    // A beta echoed from the per-scale table is not an override.
    if (j.contains("beta") && !j.at("beta").is_null() && j.value("beta_explicit", true)) {
      c.beta = j.at("beta").get<double>();
    }
    c.alpha = j.value("alpha", c.alpha);
    c.epochs = j.value("epochs", c.epochs);
    c.minibatch = j.value("minibatch", c.minibatch);
    c.crop = j.value("crop", c.crop);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.optimizer = j.value("optimizer", c.optimizer);
    const auto loss = j.value("loss", std::string("l2"));
    if (loss != "l2" && loss != "l1") throw ConfigError("unknown loss '" + loss + "' (expected l1 or l2)");
    c.loss = loss == "l2" ? ReconstructionLoss::kL2 : ReconstructionLoss::kL1;
    const auto kl = j.value("kl", std::string("standard"));
    if (kl != "standard" && kl != "printed") throw ConfigError("unknown kl convention '" + kl + "'");
    c.kl = kl == "standard" ? KlConvention::kStandard : KlConvention::kPrinted;
    c.augment = j.value("augment", c.augment);
    if (j.contains("clip_norm") && !j.at("clip_norm").is_null()) c.clip_norm = j.at("clip_norm").get<double>();
    c.early_stop = j.value("early_stop", c.early_stop);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    const auto kernel = j.value("down_kernel", std::string("bicubic"));
    if (kernel == "bicubic") {
      c.down_kernel = ResampleKernel::kBicubic;
    } else if (kernel == "bilinear") {
      c.down_kernel = ResampleKernel::kBilinear;
    } else if (kernel == "box") {
      c.down_kernel = ResampleKernel::kBox;
    } else {
      throw ConfigError("unknown down_kernel '" + kernel + "'");
    }
    c.antialias = j.value("antialias", c.antialias);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

int effective_crop(const Image& lr, int requested, int multiple) {
  if (multiple < 1) throw ContractError("effective_crop: multiple must be >= 1");
  int c = std::min({requested, lr.height, lr.width});
  c -= c % multiple;
  if (c < multiple) {
    throw ContractError(fmt::format("image {}x{} is too small for crops that are multiples of {}", lr.height,
                                    lr.width, multiple));
  }
  return c;
}

std::string loss_csv_header() { return "epoch,l_r,l_kl,beta,alpha,total"; }

std::string loss_csv_row(const EpochRecord& r) {
  return fmt::format("{},{},{},{},{},{}", r.epoch, r.loss.l_r, r.loss.l_kl, r.loss.beta, r.loss.alpha, r.loss.total);
}

template <typename T>
TrainResult<T> train_single_image(const Image& lr, const std::optional<Image>& hr, const TrainConfig& config,
                                  const TrainIo& io) {
  config.validate();
  if (lr.height < kMinTrainSide || lr.width < kMinTrainSide) {
    throw ContractError(fmt::format("training image must be at least {0}x{0}, got {1}x{2}", kMinTrainSide,
                                    lr.height, lr.width));
  }
  const auto start = std::chrono::steady_clock::now();
  const DegradationSpec spec = config.degradation();
  const double beta = config.resolved_beta();
  const int crop = effective_crop(lr, config.crop, config.model.spatial_multiple());
  if (crop < 4 * config.scale) {
    throw ContractError(fmt::format("crop {} cannot be degraded by {}x; the image is too small for this scale", crop,
                                    config.scale));
  }

  TrainResult<T> result;
  result.report.crop = crop;
  NlvaeParams<T> params = init_params<T>(config.model, config.seed);
  std::vector<Tensor<T>> tensors;
  for (const auto& p : params.parameters()) tensors.push_back(p.tensor);
  auto optimizer = make_optimizer<T>(config.optimizer, tensors, config.learning_rate);
  std::mt19937_64 noise(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const MinibatchOptions batch_options{config.minibatch, crop, config.augment};

  std::optional<std::ofstream> log;
  if (io.out_dir) {
    std::filesystem::create_directories(*io.out_dir);
    result.report.log_path = *io.out_dir / "loss.csv";
    log.emplace(*result.report.log_path);
    if (!*log) throw IoError("cannot open " + result.report.log_path->string());
    *log << loss_csv_header() << '\n';
  }

  auto snapshot = [&](const NlvaeParams<T>& p) {
    TrainedModel<T> m;
    m.params = p;
    m.scale = config.scale;
    m.train_config = to_json(config);
    return m;
  };

  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const FakeMinibatch batch = make_fake_minibatch(lr, spec, batch_options, config.seed + epoch - 1);
    const Tensor<T> x = to_tensor<T>(std::span<const Image>(batch.inputs));
    const Tensor<T> y = to_tensor<T>(std::span<const Image>(batch.targets));

    LossBreakdown breakdown;
    try {
      const LatentDistribution<T> dist = encode(x, params, BatchNormMode::kTrain);
      const Tensor<T> z = reparameterize(dist, noise);
      const Tensor<T> out = decode(z, params, x, BatchNormMode::kTrain);
      const Tensor<T> l_r = reconstruction_loss(out, y, config.loss);
      const Tensor<T> l_kl = kl_loss(dist, config.kl);
      const Tensor<T> total = total_loss(l_r, l_kl, beta, config.alpha);
      breakdown = total_loss(static_cast<double>(l_r.item()), static_cast<double>(l_kl.item()), beta, config.alpha);
      if (!std::isfinite(breakdown.total)) {
        throw NumericError(fmt::format("loss is not finite (l_r={}, l_kl={})", breakdown.l_r, breakdown.l_kl));
      }
      optimizer->zero_grad();
      backward(total);
      if (config.clip_norm) clip_grad_norm(tensors, *config.clip_norm);
      optimizer->step();
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("training diverged at epoch {}: {}", epoch, e.what()));
    }

    EpochRecord record{epoch, breakdown, seconds_since(t0)};
    result.report.epochs.push_back(record);
    if (log) *log << loss_csv_row(record) << '\n' << std::flush;
    if (io.on_epoch) io.on_epoch(record);
    if (io.progress && io.progress_every > 0 && (epoch % io.progress_every == 0 || epoch == 1)) {
      *io.progress << fmt::format("epoch {:>5}/{}  l_r {:.4f}  l_kl {:.5f}  total {:.4f}  ({:.2f}s)\n", epoch,
                                  config.epochs, breakdown.l_r, breakdown.l_kl, breakdown.total, record.seconds)
                   << std::flush;
    }
    if (io.out_dir && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch < config.epochs) {
      save_checkpoint(snapshot(params), *io.out_dir / fmt::format("checkpoint_epoch{:05d}.json", epoch));
    }

    if (breakdown.total < best - config.min_delta) {
      best = breakdown.total;
      since_best = 0;
    } else if (config.early_stop && ++since_best >= config.patience) {
      result.report.early_stopped = true;
      break;
    }
  }

  result.model = snapshot(params);
  std::optional<Image> sr;
  if (io.out_dir || hr) sr = super_resolve(lr, result.model, config.scale);
  if (io.out_dir) {
    result.report.checkpoint_path = *io.out_dir / "checkpoint.json";
    save_checkpoint(result.model, *result.report.checkpoint_path);
    result.report.output_path = *io.out_dir / "sr.png";
    save_image(*sr, *result.report.output_path);
  }
  if (hr) {
    Image reference = crop_to_multiple(*hr, config.scale);
    if (reference.height != sr->height || reference.width != sr->width) {
      throw ShapeError(fmt::format("reference {}x{} does not match the {}x{} output", reference.height,
                                   reference.width, sr->height, sr->width));
    }
    result.report.psnr = psnr(*sr, reference, MetricChannel::kLuma, config.scale);
    result.report.ssim = ssim(*sr, reference, MetricChannel::kLuma, config.scale);
    result.report.bilinear_psnr = psnr(upscale_linear(lr, config.scale), reference, MetricChannel::kLuma, config.scale);
  }
  result.report.total_seconds = seconds_since(start);
  return result;
}

template <typename T>
Image super_resolve(const Image& lr, const TrainedModel<T>& model, int scale) {
  if (scale != model.scale) {
    throw ContractError(fmt::format("model was trained for {}x, asked for {}x", model.scale, scale));
  }
  NlvaeParams<T> params = model.params.clone();
  NoGradGuard no_grad;
  const Image up = upscale_linear(lr, scale);
  const Image padded = pad_to_multiple(up, params.config.spatial_multiple());
  const Tensor<T> x = to_tensor<T>(padded);
  const LatentDistribution<T> dist = encode(x, params, BatchNormMode::kInfer);
  const Tensor<T> out = decode(dist.mu, params, x, BatchNormMode::kInfer);
  return crop(from_tensor(out, 0), 0, 0, up.height, up.width);
}

template TrainResult<float> train_single_image<float>(const Image&, const std::optional<Image>&, const TrainConfig&,
                                                      const TrainIo&);
template TrainResult<double> train_single_image<double>(const Image&, const std::optional<Image>&,
                                                        const TrainConfig&, const TrainIo&);
template Image super_resolve<float>(const Image&, const TrainedModel<float>&, int);
template Image super_resolve<double>(const Image&, const TrainedModel<double>&, int);

}  // namespace nlvae
