#include <gtest/gtest.h>

#include <png.h>

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

#include "nlvae/metrics.hpp"
#include "nlvae/pipeline.hpp"
#include "oracles.hpp"

namespace nlvae {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir() {
  const auto dir = fs::temp_directory_path() / ("nlvae_img_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

// Writes an 8-bit grayscale PNG with libpng directly.
void write_gray_png(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& data) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  ASSERT_NE(fp, nullptr);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, fp);
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, const_cast<std::uint8_t*>(data.data() + y * w));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image ramp(int h, int w) {
  Image img = Image::filled(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = 0.1 + 0.8 * x / (w - 1);
      img.at(y, x, 1) = 0.1 + 0.8 * y / (h - 1);
      img.at(y, x, 2) = 0.5;
    }
  }
  return img;
}

bool in_unit_range(const Image& img) {
  return std::all_of(img.pixels.begin(), img.pixels.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

TEST(ImageIo, WhitePngLoadsAsOnes) {
  const auto path = temp_dir() / "white.png";
  save_image(Image::filled(16, 16, 1.0), path);
  const Image img = load_image(path);
  EXPECT_EQ(img.height, 16);
  EXPECT_EQ(img.width, 16);
  for (double v : img.pixels) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(img.source_path, path);
}

TEST(ImageIo, RoundTripWithinQuantization) {
  std::mt19937_64 rng(1);
  const Image img = testing::random_image(19, 23, rng);
  const auto path = temp_dir() / "random.png";
  save_image(img, path);
  const Image back = load_image(path);
  ASSERT_EQ(back.pixels.size(), img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_LE(std::abs(back.pixels[i] - img.pixels[i]), 0.5 / 255 + 1e-12);
  // A quantized image survives exactly.
  save_image(back, path);
  EXPECT_EQ(load_image(path).pixels, back.pixels);
}

TEST(ImageIo, GrayIsReplicated) {
  const auto path = temp_dir() / "gray.png";
  write_gray_png(path, 3, 2, {0, 51, 102, 153, 204, 255});
  const Image img = load_image(path);
  ASSERT_EQ(img.width, 3);
  ASSERT_EQ(img.height, 2);
  EXPECT_EQ(img.at(1, 0, 0), 153 / 255.0);
  EXPECT_EQ(img.at(1, 0, 1), 153 / 255.0);
  EXPECT_EQ(img.at(1, 0, 2), 153 / 255.0);
}

TEST(ImageIo, MissingFileIsIoError) { EXPECT_THROW(load_image("/nonexistent/x.png"), IoError); }

TEST(Degrade, ConstantStaysConstant) {
  for (int scale : {2, 3, 4}) {
    const Image lr = degrade(Image::filled(48, 40, 0.37), {scale, ResampleKernel::kBicubic, true});
    for (double v : lr.pixels) EXPECT_NEAR(v, 0.37, 1e-12);
  }
}

TEST(Degrade, BoxOnCheckerboardAverages) {
  Image checker = Image::filled(16, 16, 0.0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) checker.at(y, x, c) = (x + y) % 2;
    }
  }
  const Image lr = degrade(checker, {2, ResampleKernel::kBox, true});
  for (double v : lr.pixels) EXPECT_NEAR(v, 0.5, 1e-12);
}

TEST(Degrade, ShapeLaw) {
  const Image lr = degrade(Image::filled(256, 256, 0.5), {4, ResampleKernel::kBicubic, true});
  EXPECT_EQ(lr.height, 64);
  EXPECT_EQ(lr.width, 64);
  const Image odd = degrade(Image::filled(67, 50, 0.5), {3, ResampleKernel::kBicubic, true});
  EXPECT_EQ(odd.height, 22);  // pre-cropped to 66
  EXPECT_EQ(odd.width, 16);   // pre-cropped to 48
}

TEST(Degrade, DegenerateScaleRejected) {
  EXPECT_THROW(degrade(Image::filled(20, 20, 0.5), {8, ResampleKernel::kBicubic, true}), ContractError);
  EXPECT_THROW(degrade(Image::filled(20, 20, 0.5), {1, ResampleKernel::kBicubic, true}), ConfigError);
}

TEST(Resize, CubicReproducesLinearRampInInterior) {
  // Cubic convolution with a = -0.5 reproduces linear functions exactly.
  const Image hr = ramp(64, 64);
  const Image lr = resize(hr, 32, 32, ResampleKernel::kBicubic, true);
  for (int y = 4; y < 28; ++y) {
    for (int x = 4; x < 28; ++x) {
      // Output pixel x covers input centre 2x + 0.5.
      EXPECT_NEAR(lr.at(y, x, 0), 0.1 + 0.8 * (2 * x + 0.5) / 63, 1e-12);
      EXPECT_NEAR(lr.at(y, x, 1), 0.1 + 0.8 * (2 * y + 0.5) / 63, 1e-12);
    }
  }
}

TEST(Upscale, ConstantAndShape) {
  const Image up = upscale_linear(Image::filled(64, 64, 0.6), 4);
  EXPECT_EQ(up.height, 256);
  EXPECT_EQ(up.width, 256);
  for (double v : up.pixels) EXPECT_NEAR(v, 0.6, 1e-12);
}

TEST(Upscale, NearInverseOnSmoothImage) {
  const Image lr = ramp(32, 32);
  const Image back = degrade(upscale_linear(lr, 2), {2, ResampleKernel::kBilinear, true});
  EXPECT_GT(psnr(back, lr, MetricChannel::kRgb), 30.0);
}

TEST(Pipeline, OpsStayInUnitRange) {
  std::mt19937_64 rng(3);
  const Image img = testing::random_image(32, 32, rng);
  EXPECT_TRUE(in_unit_range(degrade(img, {2, ResampleKernel::kBicubic, true})));
  EXPECT_TRUE(in_unit_range(upscale_linear(img, 3)));
  EXPECT_TRUE(in_unit_range(upscale_bicubic(img, 2)));
  EXPECT_TRUE(in_unit_range(prepare_canvas(img, Canvas::kResize256)));
}

TEST(Pipeline, CanvasModes) {
  const Image img = Image::filled(40, 60, 0.2);
  const Image resized = prepare_canvas(img, Canvas::kResize256);
  EXPECT_EQ(resized.height, 256);
  EXPECT_EQ(resized.width, 256);
  EXPECT_EQ(prepare_canvas(img, Canvas::kNative).pixels, img.pixels);
}

TEST(Minibatch, DegenerateBatchIsTheImage) {
  std::mt19937_64 rng(5);
  const Image lr = testing::random_image(24, 24, rng);
  const auto batch = make_fake_minibatch(lr, {2, ResampleKernel::kBicubic, true}, {1, 24, false}, 9);
  ASSERT_EQ(batch.size(), 1);
  EXPECT_EQ(batch.targets[0].pixels, lr.pixels);
}

TEST(Minibatch, DeterministicUnderSeed) {
  std::mt19937_64 rng(7);
  const Image lr = testing::random_image(40, 40, rng);
  const DegradationSpec spec{2, ResampleKernel::kBicubic, true};
  const auto a = make_fake_minibatch(lr, spec, {8, 16, true}, 42);
  const auto b = make_fake_minibatch(lr, spec, {8, 16, true}, 42);
  const auto c = make_fake_minibatch(lr, spec, {8, 16, true}, 43);
  bool differs = false;
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(a.targets[i].pixels, b.targets[i].pixels);
    EXPECT_EQ(a.inputs[i].pixels, b.inputs[i].pixels);
    differs = differs || a.targets[i].pixels != c.targets[i].pixels;
  }
  EXPECT_TRUE(differs);
}

TEST(Minibatch, TargetsAreWindowsOfTheSource) {
  std::mt19937_64 rng(11);
  const Image lr = testing::random_image(30, 26, rng);
  const auto batch = make_fake_minibatch(lr, {2, ResampleKernel::kBicubic, true}, {8, 12, true}, 5);
  for (int i = 0; i < batch.size(); ++i) {
    EXPECT_TRUE(testing::find_window(lr, batch.targets[i])) << "target " << i;
    EXPECT_EQ(batch.inputs[i].height, batch.targets[i].height);
    EXPECT_EQ(batch.inputs[i].width, batch.targets[i].width);
  }
}

TEST(Minibatch, InputsAreReDegradedTargets) {
  std::mt19937_64 rng(13);
  const Image lr = testing::random_image(32, 32, rng);
  const DegradationSpec spec{2, ResampleKernel::kBicubic, true};
  const auto batch = make_fake_minibatch(lr, spec, {2, 16, false}, 1);
  const Image expected = resize(degrade(batch.targets[0], spec), 16, 16, ResampleKernel::kBilinear);
  EXPECT_EQ(batch.inputs[0].pixels, expected.pixels);
}

TEST(Minibatch, CropTooLargeIsContractError) {
  const Image lr = Image::filled(20, 20, 0.5);
  EXPECT_THROW(make_fake_minibatch(lr, {2, ResampleKernel::kBicubic, true}, {1, 21, false}, 0), ContractError);
  EXPECT_THROW(make_fake_minibatch(lr, {2, ResampleKernel::kBicubic, true}, {0, 8, false}, 0), ContractError);
}

TEST(Augment, DihedralGroup) {
  std::mt19937_64 rng(17);
  const Image img = testing::random_image(5, 5, rng);
  for (int code = 0; code < 8; ++code) EXPECT_TRUE(testing::find_window(img, augment(img, code)));
  // Four quarter turns are the identity.
  Image r = img;
  for (int k = 0; k < 4; ++k) r = augment(r, 1);
  EXPECT_EQ(r.pixels, img.pixels);
}

TEST(Tensorize, RoundTrip) {
  std::mt19937_64 rng(19);
  const Image img = testing::random_image(6, 7, rng);
  const auto t = to_tensor<double>(img);
  EXPECT_EQ(t.shape(), (Shape{1, 6, 7, 3}));
  EXPECT_EQ(from_tensor(t).pixels, img.pixels);
}

TEST(Fixture, StructuredAndTwoLevel) {
  const Image f = synthetic_fixture(128);
  EXPECT_EQ(f.height, 128);
  for (double v : f.pixels) EXPECT_TRUE(v == 0.15 || v == 0.85);
  EXPECT_EQ(f.pixels, synthetic_fixture(128).pixels);
}

}  // namespace
}  // namespace nlvae
