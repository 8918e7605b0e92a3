#pragma once

#include <cstdint>
#include <vector>

#include "nlvae/image.hpp"

namespace nlvae {

/// Where a training pair was cut from the source image.
struct CropOrigin {
  int y = 0;
  int x = 0;
  int augmentation = 0;  // see augment()
};

/// Pseudo-labelled pairs drawn from one image. inputs[i] is the re-degraded
/// and linearly re-enlarged copy of targets[i]; both have the same size.
struct FakeMinibatch {
  std::vector<Image> inputs;
  std::vector<Image> targets;
  std::vector<CropOrigin> origins;

  int size() const { return static_cast<int>(targets.size()); }
};

struct MinibatchOptions {
  int size = 8;
  int crop = 48;
  bool augment = true;
};

/// Draws `options.size` random crops of `lr`, each treated as its own
/// high-resolution target. Deterministic for a given seed.
FakeMinibatch make_fake_minibatch(const Image& lr, const DegradationSpec& spec, const MinibatchOptions& options,
                                  std::uint64_t seed);

enum class Canvas { kResize256, kNative };

/// Side of the square working canvas used by Canvas::kResize256.
inline constexpr int kCanvasSide = 256;

/// Brings a high-resolution image onto the working canvas: an antialiased
/// bicubic resize to 256x256, or the image unchanged.
Image prepare_canvas(const Image& hr, Canvas canvas);

/// Bundled procedural test image: sharp-edged oblique stripes (red), a
/// checkerboard (green) and concentric rings (blue) at levels 0.15 / 0.85.
Image synthetic_fixture(int size = 128);

}  // namespace nlvae
