#pragma once

#include <cstdint>

#include "nlvae/tensor.hpp"

namespace nlvae {

enum class Padding { kSame, kValid };
enum class UpsampleMode { kNearest, kBilinear };
enum class BatchNormMode { kTrain, kInfer };

/// Per-channel statistics carried across batch-norm calls.
template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;

  static RunningStats identity(std::int64_t channels) {
    return {std::vector<T>(static_cast<std::size_t>(channels), T(0)),
            std::vector<T>(static_cast<std::size_t>(channels), T(1))};
  }
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

// Elementwise. Binary ops require identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
template <typename T> Tensor<T> exp(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);
/// Subgradient 0 at the origin.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
/// Gradient passes only where lo < a < hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
/// max(x, slope*x); the derivative at exactly 0 is taken as slope.
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2));

// Reductions to a scalar.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

/// NHWC convolution. kernel is [K, K, Cin, Cout]. kSame pads so that the
/// output is ceil(H / stride); extra padding goes to the bottom/right.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride = 1,
                 Padding padding = Padding::kSame);

/// conv2d restricted to a [1, 1, Cin, Cout] kernel.
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const Tensor<T>& kernel);

/// Adds a [C] vector along the last axis.
template <typename T>
Tensor<T> bias_add(const Tensor<T>& input, const Tensor<T>& bias);

/// Per-channel normalization over N, H and W (or over N for rank-2 input).
/// Train mode uses batch statistics and updates `stats`; infer mode reads them.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta_shift,
                     BatchNormMode mode, RunningStats<T>& stats, BatchNormOptions options = {});

/// leaky_relu(batch_norm(...), slope) computed in one pass.
template <typename T>
Tensor<T> batch_norm_leaky_relu(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta_shift,
                                BatchNormMode mode, RunningStats<T>& stats, BatchNormOptions options, T slope);

/// [N, H, W, C] -> [N, C] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

/// 2x2 mean pooling with stride 2. H and W must be even.
template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& input);

/// Mean pooling by an integer factor that divides H and W.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& input, int factor);

/// [N, H, W, C] -> [N, 2H, 2W, C]. Bilinear uses half-pixel centres with edge clamping.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input, UpsampleMode mode);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// [N, D] x [D, E] + [E].
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// [N, C] -> [N, H, W, C] by repetition over space.
template <typename T>
Tensor<T> broadcast_spatial(const Tensor<T>& vec, std::int64_t height, std::int64_t width);

/// Rows [begin, end) along the first axis.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& input, std::int64_t begin, std::int64_t end);

}  // namespace nlvae
