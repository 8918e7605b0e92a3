#include "nlvae/pipeline.hpp"

#include <cmath>
#include <random>

namespace nlvae {

FakeMinibatch make_fake_minibatch(const Image& lr, const DegradationSpec& spec, const MinibatchOptions& options,
                                  std::uint64_t seed) {
  if (options.size < 1) throw ContractError("make_fake_minibatch: minibatch size must be >= 1");
  if (options.crop < 1 || options.crop > lr.height || options.crop > lr.width) {
    throw ContractError("make_fake_minibatch: crop " + std::to_string(options.crop) + " does not fit a " +
                        std::to_string(lr.height) + "x" + std::to_string(lr.width) + " image");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_y(0, lr.height - options.crop);
  std::uniform_int_distribution<int> pick_x(0, lr.width - options.crop);
  std::uniform_int_distribution<int> pick_aug(0, 7);

  FakeMinibatch batch;
  for (int i = 0; i < options.size; ++i) {
    CropOrigin origin;
    origin.y = pick_y(rng);
    origin.x = pick_x(rng);
    origin.augmentation = options.augment ? pick_aug(rng) : 0;
    Image target = augment(crop(lr, origin.y, origin.x, options.crop, options.crop), origin.augmentation);
    const Image low = degrade(target, spec);
    batch.inputs.push_back(resize(low, target.height, target.width, ResampleKernel::kBilinear));
    batch.targets.push_back(std::move(target));
    batch.origins.push_back(origin);
  }
  return batch;
}

Image prepare_canvas(const Image& hr, Canvas canvas) {
  if (canvas == Canvas::kNative) return hr;
  return resize(hr, kCanvasSide, kCanvasSide, ResampleKernel::kBicubic, true);
}

Image synthetic_fixture(int size) {
  if (size < 16) throw ContractError("synthetic_fixture: size must be >= 16");
  Image img = Image::filled(size, size, 0.0);
  const double centre = size / 2.0;
  constexpr double lo = 0.15, hi = 0.85;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const auto stripe = static_cast<long>(std::floor((x + 0.5 * y) / 16.0)) % 2;
      const auto check = (y / 20 + x / 20) % 2;
      const double r = std::hypot(x - centre, y - centre);
      const auto ring = static_cast<long>(std::floor(r / 14.0)) % 2;
      img.at(y, x, 0) = stripe ? hi : lo;
      img.at(y, x, 1) = check ? hi : lo;
      img.at(y, x, 2) = ring ? hi : lo;
    }
  }
  return img;
}

}  // namespace nlvae
