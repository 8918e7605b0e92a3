#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nlvae/ops.hpp"
#include "nlvae/tensor.hpp"

namespace nlvae {

/// Order of the two convolutions on the transformed path of a non-local block.
enum class MidPathOrder { kPointwiseFirst, kConvFirst };

struct ModelConfig {
  std::vector<int> encoder_widths{32, 64, 64, 128, 128};
  std::vector<int> decoder_widths{128, 128, 64, 64, 32, 32, 32, 32, 32};
  int latent_dim = 128;
  /// Decoder blocks preceded by a 2x upsample; the seed grid is target / 2^stages.
  int upsample_stages = 4;
  double leaky_slope = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  UpsampleMode upsample = UpsampleMode::kNearest;
  MidPathOrder mid_order = MidPathOrder::kPointwiseFirst;
  /// Concatenate the (pooled) network input to every decoder stage.
  bool condition_on_input = true;
  /// Start mu/log-variance heads at zero so the initial posterior is the prior.
  bool zero_init_heads = true;

  /// Default widths truncated/extended to the given block counts.
  static ModelConfig with_block_counts(int encoder_blocks, int decoder_blocks);

  int encoder_downsample() const;
  int decoder_upsample_stages() const;
  /// Input height and width must be multiples of this.
  int spatial_multiple() const;
  void validate() const;
};

/// 3x3 (or 1x1) convolution + batch norm + leaky ReLU. No conv bias: batch
/// norm removes any per-channel offset.
template <typename T>
struct ConvUnit {
  Tensor<T> kernel;
  Tensor<T> gamma;
  Tensor<T> beta_shift;
  RunningStats<T> stats;
};

template <typename T>
struct NonLocalBlockParams {
  int in_channels = 0;
  int out_channels = 0;
  ConvUnit<T> first_conv;      // 3x3, in -> out
  ConvUnit<T> mid_pointwise;   // 1x1, out -> out
  ConvUnit<T> mid_conv;        // 3x3, out -> out
  Tensor<T> fuse_kernel;       // 1x1, 2*out -> out
  Tensor<T> fuse_bias;
};

template <typename T>
struct DenseParams {
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct NamedStats {
  std::string name;
  RunningStats<T>* stats;
};

template <typename T>
struct NlvaeParams {
  ModelConfig config;
  std::vector<NonLocalBlockParams<T>> encoder_blocks;
  DenseParams<T> mu_head;
  DenseParams<T> logvar_head;
  DenseParams<T> decoder_seed;
  std::vector<NonLocalBlockParams<T>> decoder_blocks;
  Tensor<T> output_kernel;  // 3x3 -> 3 channels
  Tensor<T> output_bias;

  /// Learnable tensors in a fixed order (the optimizer addresses them by index).
  std::vector<NamedTensor<T>> parameters() const;
  /// Batch-norm running statistics in a fixed order.
  std::vector<NamedStats<T>> buffers();
  std::int64_t parameter_count() const;
  /// Deep copy: tensors get fresh storage, so the copy can be modified or
  /// used from another thread independently.
  NlvaeParams clone() const;
};

/// Kernels ~ N(0, 2 / (fan_in (1 + slope^2))), biases zero, gamma one.
template <typename T>
NlvaeParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
NonLocalBlockParams<T> init_block(int in_channels, int out_channels, double slope, std::mt19937_64& rng);

struct BlockOptions {
  BatchNormMode mode = BatchNormMode::kTrain;
  double slope = 0.2;
  BatchNormOptions bn{};
  MidPathOrder mid_order = MidPathOrder::kPointwiseFirst;
};

/// y = fuse(concat(f1, f3)), f1 = act(bn(conv3(x))), f3 = act(bn(conv3(act(bn(pw(f1)))))).
/// Spatial size is preserved.
template <typename T>
Tensor<T> non_local_block(const Tensor<T>& x, NonLocalBlockParams<T>& params, const BlockOptions& options);

/// Diagonal Gaussian posterior, one row per batch item.
template <typename T>
struct LatentDistribution {
  Tensor<T> mu;       // [M, J]
  Tensor<T> log_var;  // [M, J], clamped to [-10, 10]

  std::int64_t latent_dim() const { return mu.dim(mu.rank() - 1); }
};

inline constexpr double kLogVarBound = 10.0;

/// Encoder blocks with 2x average pooling between them, global average
/// pooling, then dense mu and log-variance heads.
template <typename T>
LatentDistribution<T> encode(const Tensor<T>& x, NlvaeParams<T>& params, BatchNormMode mode);

/// z = mu + exp(log_var / 2) * eps. eps is a constant (no gradient).
template <typename T>
Tensor<T> reparameterize(const LatentDistribution<T>& dist, const Tensor<T>& eps);

/// As above with eps drawn from `rng`.
template <typename T>
Tensor<T> reparameterize(const LatentDistribution<T>& dist, std::mt19937_64& rng);

/// Standard normal tensor.
template <typename T>
Tensor<T> standard_normal(Shape shape, std::mt19937_64& rng);

/// One draw from the N(0, I) prior, shape [J].
template <typename T>
Tensor<T> sample_prior(int latent_dim, std::mt19937_64& rng);

/// Decodes z ([M, J] or [J]) to an [M, H, W, 3] image batch in [0, 1].
/// `conditioning` is the [M, H, W, 3] network input; it fixes the output size
/// and, when the config enables it, feeds every decoder stage.
template <typename T>
Tensor<T> decode(const Tensor<T>& z, NlvaeParams<T>& params, const Tensor<T>& conditioning, BatchNormMode mode);

/// Output size only (no input conditioning). Only valid when the config
/// disables conditioning.
template <typename T>
Tensor<T> decode(const Tensor<T>& z, NlvaeParams<T>& params, std::int64_t height, std::int64_t width,
                 BatchNormMode mode);

}  // namespace nlvae
