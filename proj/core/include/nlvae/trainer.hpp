#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nlvae/checkpoint.hpp"
#include "nlvae/image.hpp"
#include "nlvae/objective.hpp"

namespace nlvae {

struct TrainConfig {
  int scale = 4;
  /// Unset: the per-scale table, then the global default (see resolve_beta).
  std::optional<double> beta;
  double alpha = 0.0;
  int epochs = 2000;
  int minibatch = 8;
  /// Crop side at LR scale; clipped to the largest usable multiple of the
  /// model's spatial multiple that fits the image.
  int crop = 48;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  ReconstructionLoss loss = ReconstructionLoss::kL2;
  KlConvention kl = KlConvention::kStandard;
  bool augment = true;
  /// Joint gradient-norm bound; unset disables clipping.
  std::optional<double> clip_norm;
  bool early_stop = false;
  int patience = 200;
  double min_delta = 1e-5;
  /// Write a checkpoint every this many epochs (0: final only).
  int checkpoint_every = 0;
  ModelConfig model;
  ResampleKernel down_kernel = ResampleKernel::kBicubic;
  bool antialias = true;

  double resolved_beta() const { return resolve_beta(scale, beta); }
  DegradationSpec degradation() const { return {scale, down_kernel, antialias}; }
  void validate() const;
};

/// Every field, defaults included, with beta resolved.
nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;  // 1-based
  LossBreakdown loss;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  bool early_stopped = false;
  int crop = 0;  // effective crop side
  double total_seconds = 0;
  std::optional<std::filesystem::path> log_path;
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> output_path;
  /// Filled when a high-resolution reference was supplied.
  std::optional<double> psnr;
  std::optional<double> ssim;
  std::optional<double> bilinear_psnr;
};

/// Side outputs of a training run. Everything is optional.
struct TrainIo {
  /// Receives loss.csv, checkpoints and sr.png.
  std::optional<std::filesystem::path> out_dir;
  /// Progress lines every `progress_every` epochs (0 disables).
  std::ostream* progress = nullptr;
  int progress_every = 50;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
struct TrainResult {
  TrainedModel<T> model;
  TrainReport report;
};

/// Largest crop <= requested that is a multiple of `multiple` and fits `lr`.
int effective_crop(const Image& lr, int requested, int multiple);

/// Zero-shot training on one low-resolution image: each epoch draws a fresh
/// fake minibatch of pseudo pairs, runs encode -> reparameterize -> decode,
/// and takes one optimizer step on all parameters. `hr`, when present, is
/// only used to score the final output.
template <typename T>
TrainResult<T> train_single_image(const Image& lr, const std::optional<Image>& hr, const TrainConfig& config,
                                  const TrainIo& io = {});

/// Linear upscale, encode with running batch statistics, z = mu, decode.
/// Output is scale times the LR size. Throws ContractError when `scale`
/// differs from the model's training scale.
template <typename T>
Image super_resolve(const Image& lr, const TrainedModel<T>& model, int scale);

/// "epoch,l_r,l_kl,beta,alpha,total" header line.
std::string loss_csv_header();
std::string loss_csv_row(const EpochRecord& record);

extern template TrainResult<float> train_single_image<float>(const Image&, const std::optional<Image>&,
                                                             const TrainConfig&, const TrainIo&);
extern template TrainResult<double> train_single_image<double>(const Image&, const std::optional<Image>&,
                                                               const TrainConfig&, const TrainIo&);
extern template Image super_resolve<float>(const Image&, const TrainedModel<float>&, int);
extern template Image super_resolve<double>(const Image&, const TrainedModel<double>&, int);

}  // namespace nlvae
