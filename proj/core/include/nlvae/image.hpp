#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nlvae/tensor.hpp"

namespace nlvae {

/// RGB image with interleaved channels, values in [0, 1] (sRGB-encoded).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // height * width * 3
  std::optional<std::filesystem::path> source_path;

  static constexpr int kChannels = 3;

  static Image filled(int height, int width, double value);

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * kChannels + c];
  }
  bool empty() const { return pixels.empty(); }
};

/// Reads an 8- or 16-bit PNG. Gray is replicated to RGB, palettes are expanded
/// and alpha is dropped.
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG; values are clamped and rounded to the nearest level.
void save_image(const Image& image, const std::filesystem::path& path);

enum class ResampleKernel { kBox, kBilinear, kBicubic };

/// Separable resampling with MATLAB imresize semantics: half-pixel centres,
/// symmetric edge extension, and kernel widening when shrinking with antialias.
/// Cubic uses a = -0.5. The result is clamped to [0, 1].
Image resize(const Image& image, int out_height, int out_width, ResampleKernel kernel, bool antialias = true);

/// Parameters of the degradation I_lr = D(I_hr; scale).
struct DegradationSpec {
  int scale = 4;
  ResampleKernel down_kernel = ResampleKernel::kBicubic;
  bool antialias = true;
};

Image crop(const Image& image, int y, int x, int height, int width);

/// Drops trailing rows/columns so both extents are multiples of `multiple`.
Image crop_to_multiple(const Image& image, int multiple);

/// Replicates the last row/column so both extents become multiples of `multiple`.
Image pad_to_multiple(const Image& image, int multiple);

/// Downsamples by spec.scale after cropping to a multiple of the scale.
/// Throws ContractError when scale exceeds min(H, W) / 4.
Image degrade(const Image& hr, const DegradationSpec& spec);

/// Bilinear enlargement by an integer factor, clamped to [0, 1].
Image upscale_linear(const Image& lr, int scale);

/// Bicubic enlargement (the conventional "Bicubic" SR baseline).
Image upscale_bicubic(const Image& lr, int scale);

/// Rounds every value to the nearest 8-bit level.
Image quantize8(const Image& image);

/// Dihedral transform: code % 4 quarter turns counter-clockwise, then a
/// horizontal flip when code >= 4. Codes are 0..7.
Image augment(const Image& image, int code);

/// ITU-R BT.601 luma scaled to [0, 1]: (16 + 65.481 R + 128.553 G + 24.966 B) / 255.
std::vector<double> luma(const Image& image);

/// Packs images of identical size into an [N, H, W, 3] tensor.
template <typename T>
Tensor<T> to_tensor(std::span<const Image> images);

template <typename T>
Tensor<T> to_tensor(const Image& image) {
  return to_tensor<T>(std::span<const Image>(&image, 1));
}

/// Extracts batch item `index` of an [N, H, W, 3] tensor, clamped to [0, 1].
template <typename T>
Image from_tensor(const Tensor<T>& tensor, std::int64_t index = 0);

extern template Tensor<float> to_tensor<float>(std::span<const Image>);
extern template Tensor<double> to_tensor<double>(std::span<const Image>);
extern template Image from_tensor<float>(const Tensor<float>&, std::int64_t);
extern template Image from_tensor<double>(const Tensor<double>&, std::int64_t);

}  // namespace nlvae
