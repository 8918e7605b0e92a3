#include "nlvae/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace nlvae {

Image Image::filled(int height, int width, double value) {
  if (height < 0 || width < 0) throw ContractError("Image::filled: negative extent");
  Image img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<std::size_t>(height) * width * kChannels, value);
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

Image load_image(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw IoError(path.string() + ": not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  Image img;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": PNG decode failed");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_gray_to_rgb(png);
  }
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  if ((depth != 8 && depth != 16) || channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": unsupported bit depth " + std::to_string(depth));
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.pixels.resize(static_cast<std::size_t>(img.height) * img.width * Image::kChannels);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::size_t y = i / (static_cast<std::size_t>(img.width) * 3);
    const std::size_t rem = i % (static_cast<std::size_t>(img.width) * 3);
    if (depth == 8) {
      img.pixels[i] = buffer[y * stride + rem] / 255.0;
    } else {
      const png_byte* p = buffer.data() + y * stride + rem * 2;
      img.pixels[i] = ((p[0] << 8) | p[1]) / 65535.0;
    }
  }
  img.source_path = path;
  return img;
}

void save_image(const Image& image, const std::filesystem::path& path) {
  if (image.height <= 0 || image.width <= 0) throw ContractError("save_image: empty image");
  if (path.has_parent_path() && !std::filesystem::exists(path.parent_path())) {
    throw IoError("save_image: directory " + path.parent_path().string() + " does not exist");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> buffer(image.pixels.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    buffer[i] = static_cast<png_byte>(std::lround(clamp01(image.pixels[i]) * 255.0));
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": PNG encode failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, buffer.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

double cubic(double x) {
  const double a = std::abs(x), a2 = a * a, a3 = a2 * a;
  if (a <= 1.0) return 1.5 * a3 - 2.5 * a2 + 1.0;
  if (a <= 2.0) return -0.5 * a3 + 2.5 * a2 - 4.0 * a + 2.0;
  return 0.0;
}

double triangle(double x) {
  if (x >= -1.0 && x < 0.0) return x + 1.0;
  if (x >= 0.0 && x <= 1.0) return 1.0 - x;
  return 0.0;
}

double box(double x) { return (x >= -0.5 && x < 0.5) ? 1.0 : 0.0; }

struct Contribution {
  std::vector<int> index;
  std::vector<double> weight;
};

// One entry per output sample along an axis.
std::vector<Contribution> contributions(int in_len, int out_len, ResampleKernel kernel, bool antialias) {
  double (*fn)(double) = kernel == ResampleKernel::kBox ? box : kernel == ResampleKernel::kBilinear ? triangle : cubic;
  double width = kernel == ResampleKernel::kBox ? 1.0 : kernel == ResampleKernel::kBilinear ? 2.0 : 4.0;
  const double scale = static_cast<double>(out_len) / in_len;
  const bool shrink = scale < 1.0 && antialias;
  if (shrink) width /= scale;
  const int taps = static_cast<int>(std::ceil(width)) + 2;

  std::vector<Contribution> out(static_cast<std::size_t>(out_len));
  for (int o = 0; o < out_len; ++o) {
    // 1-based coordinates, as in the reference formulation.
    const double u = (o + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    Contribution& c = out[o];
    double total = 0.0;
    for (int t = 0; t < taps; ++t) {
      const int j = left + t;
      const double d = u - j;
      const double wgt = shrink ? scale * fn(scale * d) : fn(d);
      if (wgt == 0.0) continue;
      // Symmetric extension of 1-based index j into [1, in_len].
      const int period = 2 * in_len;
      int m = (j - 1) % period;
      if (m < 0) m += period;
      const int src = m < in_len ? m : period - 1 - m;
      c.index.push_back(src);
      c.weight.push_back(wgt);
      total += wgt;
    }
    for (auto& wgt : c.weight) wgt /= total;
  }
  return out;
}

}  // namespace

Image resize(const Image& image, int out_height, int out_width, ResampleKernel kernel, bool antialias) {
  if (image.height <= 0 || image.width <= 0) throw ContractError("resize: empty image");
  if (out_height <= 0 || out_width <= 0) throw ContractError("resize: output extents must be positive");
  const auto rows = contributions(image.height, out_height, kernel, antialias);
  const auto cols = contributions(image.width, out_width, kernel, antialias);
  constexpr int C = Image::kChannels;

  // Vertical pass first, then horizontal.
  std::vector<double> mid(static_cast<std::size_t>(out_height) * image.width * C, 0.0);
  for (int oy = 0; oy < out_height; ++oy) {
    const auto& c = rows[oy];
    double* dst = mid.data() + static_cast<std::size_t>(oy) * image.width * C;
    for (std::size_t t = 0; t < c.index.size(); ++t) {
      const double* src = image.pixels.data() + static_cast<std::size_t>(c.index[t]) * image.width * C;
      for (int i = 0; i < image.width * C; ++i) dst[i] += c.weight[t] * src[i];
    }
  }
  Image out = Image::filled(out_height, out_width, 0.0);
  for (int oy = 0; oy < out_height; ++oy) {
    const double* src_row = mid.data() + static_cast<std::size_t>(oy) * image.width * C;
    for (int ox = 0; ox < out_width; ++ox) {
      const auto& c = cols[ox];
      for (int ch = 0; ch < C; ++ch) {
        double acc = 0.0;
        for (std::size_t t = 0; t < c.index.size(); ++t) acc += c.weight[t] * src_row[c.index[t] * C + ch];
        out.at(oy, ox, ch) = clamp01(acc);
      }
    }
  }
  return out;
}

Image crop(const Image& image, int y, int x, int height, int width) {
  if (y < 0 || x < 0 || height <= 0 || width <= 0 || y + height > image.height || x + width > image.width) {
    throw ContractError("crop: window exceeds image bounds");
  }
  Image out = Image::filled(height, width, 0.0);
  for (int r = 0; r < height; ++r) {
    const double* src = image.pixels.data() + (static_cast<std::size_t>(y + r) * image.width + x) * 3;
    std::copy_n(src, static_cast<std::size_t>(width) * 3, out.pixels.data() + static_cast<std::size_t>(r) * width * 3);
  }
  return out;
}

Image crop_to_multiple(const Image& image, int multiple) {
  if (multiple < 1) throw ContractError("crop_to_multiple: multiple must be >= 1");
  const int h = image.height - image.height % multiple;
  const int w = image.width - image.width % multiple;
  if (h == image.height && w == image.width) return image;
  if (h == 0 || w == 0) throw ContractError("crop_to_multiple: image smaller than " + std::to_string(multiple));
  Image out = crop(image, 0, 0, h, w);
  out.source_path = image.source_path;
  return out;
}

Image pad_to_multiple(const Image& image, int multiple) {
  if (multiple < 1) throw ContractError("pad_to_multiple: multiple must be >= 1");
  const int h = (image.height + multiple - 1) / multiple * multiple;
  const int w = (image.width + multiple - 1) / multiple * multiple;
  if (h == image.height && w == image.width) return image;
  Image out = Image::filled(h, w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(std::min(y, image.height - 1), std::min(x, image.width - 1), c);
  return out;
}

Image degrade(const Image& hr, const DegradationSpec& spec) {
  if (spec.scale < 2) throw ConfigError("degrade: scale must be >= 2, got " + std::to_string(spec.scale));
  if (spec.scale * 4 > std::min(hr.height, hr.width)) {
    throw ContractError("degrade: scale " + std::to_string(spec.scale) + " is degenerate for a " +
                        std::to_string(hr.height) + "x" + std::to_string(hr.width) + " image");
  }
  const Image base = crop_to_multiple(hr, spec.scale);
  return resize(base, base.height / spec.scale, base.width / spec.scale, spec.down_kernel, spec.antialias);
}

Image upscale_linear(const Image& lr, int scale) {
  if (scale < 2) throw ConfigError("upscale_linear: scale must be >= 2");
  return resize(lr, lr.height * scale, lr.width * scale, ResampleKernel::kBilinear, true);
}

Image upscale_bicubic(const Image& lr, int scale) {
  if (scale < 2) throw ConfigError("upscale_bicubic: scale must be >= 2");
  return resize(lr, lr.height * scale, lr.width * scale, ResampleKernel::kBicubic, true);
}

Image quantize8(const Image& image) {
  Image out = image;
  for (auto& v : out.pixels) v = std::round(clamp01(v) * 255.0) / 255.0;
  return out;
}

Image augment(const Image& image, int code) {
  if (code < 0 || code > 7) throw ContractError("augment: code must be in 0..7");
  Image cur = image;
  for (int turn = 0; turn < code % 4; ++turn) {
    // Quarter turn counter-clockwise: out(y, x) = in(x, W - 1 - y).
    Image next = Image::filled(cur.width, cur.height, 0.0);
    for (int y = 0; y < next.height; ++y)
      for (int x = 0; x < next.width; ++x)
        for (int c = 0; c < 3; ++c) next.at(y, x, c) = cur.at(x, cur.width - 1 - y, c);
    cur = std::move(next);
  }
  if (code >= 4) {
    Image next = Image::filled(cur.height, cur.width, 0.0);
    for (int y = 0; y < cur.height; ++y)
      for (int x = 0; x < cur.width; ++x)
        for (int c = 0; c < 3; ++c) next.at(y, x, c) = cur.at(y, cur.width - 1 - x, c);
    cur = std::move(next);
  }
  cur.source_path = image.source_path;
  return cur;
}

std::vector<double> luma(const Image& image) {
  std::vector<double> y(static_cast<std::size_t>(image.height) * image.width);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* p = image.pixels.data() + i * 3;
    y[i] = (16.0 + 65.481 * p[0] + 128.553 * p[1] + 24.966 * p[2]) / 255.0;
  }
  return y;
}

template <typename T>
Tensor<T> to_tensor(std::span<const Image> images) {
  if (images.empty()) throw ContractError("to_tensor: no images");
  const int h = images[0].height, w = images[0].width;
  std::vector<T> data;
  data.reserve(images.size() * static_cast<std::size_t>(h) * w * 3);
  for (const auto& img : images) {
    if (img.height != h || img.width != w) throw ShapeError("to_tensor: images differ in size");
    for (double v : img.pixels) data.push_back(static_cast<T>(v));
  }
  return Tensor<T>::from_vector({static_cast<std::int64_t>(images.size()), h, w, 3}, std::move(data));
}

template <typename T>
Image from_tensor(const Tensor<T>& tensor, std::int64_t index) {
  if (tensor.rank() != 4 || tensor.dim(3) != 3) throw ShapeError("from_tensor: expected [N, H, W, 3]");
  if (index < 0 || index >= tensor.dim(0)) throw ContractError("from_tensor: index out of range");
  Image img = Image::filled(static_cast<int>(tensor.dim(1)), static_cast<int>(tensor.dim(2)), 0.0);
  const std::size_t n = img.pixels.size();
  const auto values = tensor.values();
  for (std::size_t i = 0; i < n; ++i) img.pixels[i] = clamp01(static_cast<double>(values[index * n + i]));
  return img;
}

template Tensor<float> to_tensor<float>(std::span<const Image>);
template Tensor<double> to_tensor<double>(std::span<const Image>);
template Image from_tensor<float>(const Tensor<float>&, std::int64_t);
template Image from_tensor<double>(const Tensor<double>&, std::int64_t);

}  // namespace nlvae
