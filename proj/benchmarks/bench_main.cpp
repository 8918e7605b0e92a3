#include <benchmark/benchmark.h>

#include <random>

#include "nlvae/metrics.hpp"
#include "nlvae/model.hpp"
#include "nlvae/objective.hpp"
#include "nlvae/optim.hpp"
#include "nlvae/pipeline.hpp"

namespace {

using namespace nlvae;
using TensorF = Tensor<float>;

TensorF random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = u(rng);
  return TensorF::from_vector(std::move(shape), std::move(v), requires_grad);
}

Image noisy_image(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Image img = Image::filled(side, side, 0);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

// Args: spatial side, channels.
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto s = state.range(0), c = state.range(1);
  const auto x = random_tensor({1, s, s, c}, 1);
  const auto k = random_tensor({3, 3, c, c}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k));
  state.SetItemsProcessed(state.iterations() * s * s * 9 * c * c);
}
BENCHMARK(BM_Conv3x3Forward)->Args({48, 32})->Args({64, 64})->Args({256, 32})->Unit(benchmark::kMillisecond);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto s = state.range(0), c = state.range(1);
  const auto x = random_tensor({1, s, s, c}, 1, true);
  auto k = random_tensor({3, 3, c, c}, 2, true);
  for (auto _ : state) {
    k.zero_grad();
    backward(sum(conv2d(x, k)));
  }
  state.SetItemsProcessed(state.iterations() * s * s * 9 * c * c);
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({48, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);

void BM_PointwiseForward(benchmark::State& state) {
  const auto s = state.range(0), c = state.range(1);
  const auto x = random_tensor({1, s, s, c}, 1);
  const auto k = random_tensor({1, 1, c, c}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(pointwise_conv(x, k));
  state.SetItemsProcessed(state.iterations() * s * s * c * c);
}
BENCHMARK(BM_PointwiseForward)->Args({48, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);

void BM_NonLocalBlock(benchmark::State& state) {
  const auto s = state.range(0);
  std::mt19937_64 rng(3);
  auto block = init_block<float>(32, 32, 0.2, rng);
  const auto x = random_tensor({8, s, s, 32}, 4, true);
  for (auto _ : state) backward(sum(non_local_block(x, block, {})));
}
BENCHMARK(BM_NonLocalBlock)->Arg(24)->Arg(48)->Unit(benchmark::kMillisecond);

// One full optimization step of the default model on a fake minibatch.
void BM_TrainingStep(benchmark::State& state) {
  const auto crop = state.range(0);
  auto params = init_params<float>(ModelConfig{}, 1);
  std::vector<TensorF> leaves;
  for (const auto& p : params.parameters()) leaves.push_back(p.tensor);
  Adam<float> adam(leaves);
  const auto x = random_tensor({8, crop, crop, 3}, 5);
  std::mt19937_64 rng(6);
  for (auto _ : state) {
    adam.zero_grad();
    const auto dist = encode(x, params, BatchNormMode::kTrain);
    const auto out = decode(reparameterize(dist, rng), params, x, BatchNormMode::kTrain);
    backward(total_loss(reconstruction_loss(out, x), kl_loss(dist), 500.0, 0.0));
    adam.step();
  }
}
BENCHMARK(BM_TrainingStep)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto a = noisy_image(static_cast<int>(state.range(0)), 1);
  const auto b = noisy_image(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_Psnr(benchmark::State& state) {
  const auto a = noisy_image(256, 1), b = noisy_image(256, 2);
  for (auto _ : state) benchmark::DoNotOptimize(psnr(a, b));
}
BENCHMARK(BM_Psnr)->Unit(benchmark::kMicrosecond);

void BM_DegradeBicubic(benchmark::State& state) {
  const auto hr = noisy_image(256, 1);
  const DegradationSpec spec{static_cast<int>(state.range(0)), ResampleKernel::kBicubic, true};
  for (auto _ : state) benchmark::DoNotOptimize(degrade(hr, spec));
}
BENCHMARK(BM_DegradeBicubic)->Arg(2)->Arg(4)->Unit(benchmark::kMicrosecond);

void BM_FakeMinibatch(benchmark::State& state) {
  const auto lr = noisy_image(128, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(make_fake_minibatch(lr, {2, ResampleKernel::kBicubic, true}, {8, 48, true}, seed++));
  }
}
BENCHMARK(BM_FakeMinibatch)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
