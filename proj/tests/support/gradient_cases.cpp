#include "gradient_cases.hpp"

#include "nlvae/model.hpp"
#include "nlvae/objective.hpp"
#include "nlvae/ops.hpp"

namespace nlvae::testing {

namespace {

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Values at least `gap` away from every point in `kinks`, so central
// differences never straddle a non-differentiable point.
TensorD away_from(Shape shape, std::mt19937_64& rng, double lo, double hi, std::vector<double> kinks,
                  double gap = 1e-3) {
  TensorD t = random_tensor(std::move(shape), rng, lo, hi);
  for (auto& v : t.values_mut()) {
    for (double k : kinks) {
      if (std::abs(v - k) < gap) v = k + (v < k ? -gap : gap) * 2;
    }
  }
  return t;
}

LossFn projected(std::uint64_t seed, std::function<TensorD(const std::vector<TensorD>&)> f) {
  return [seed, f](const std::vector<TensorD>& in) { return random_projection(f(in), seed ^ 0xabcdefULL); };
}

GradientInstance unary(std::uint64_t seed, TensorD (*op)(const TensorD&), double lo, double hi,
                       std::vector<double> kinks = {}) {
  std::mt19937_64 rng(seed);
  Shape shape{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 1, 3)};
  return {projected(seed, [op](const auto& in) { return op(in[0]); }), {away_from(shape, rng, lo, hi, kinks)}};
}

Shape image_shape(std::mt19937_64& rng, int max_side = 5, int max_c = 3) {
  return {pick(rng, 1, 2), pick(rng, 2, max_side), pick(rng, 2, max_side), pick(rng, 1, max_c)};
}

GradientInstance conv_case(std::uint64_t seed, int stride, Padding padding) {
  std::mt19937_64 rng(seed);
  const int k = padding == Padding::kValid ? pick(rng, 1, 3) : 2 * pick(rng, 0, 1) + 1;
  const int h = pick(rng, std::max(k, 3), 6), w = pick(rng, std::max(k, 3), 6);
  const int cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  return {projected(seed, [stride, padding](const auto& in) { return conv2d(in[0], in[1], stride, padding); }),
          {random_tensor({pick(rng, 1, 2), h, w, cin}, rng), random_tensor({k, k, cin, cout}, rng)}};
}

GradientInstance batch_norm_case(std::uint64_t seed, bool rank2, bool infer, bool fused) {
  std::mt19937_64 rng(seed);
  const int c = pick(rng, 1, 3);
  const Shape shape = rank2 ? Shape{pick(rng, 3, 6), c} : Shape{pick(rng, 1, 2), pick(rng, 2, 4), pick(rng, 2, 4), c};
  auto stats = std::make_shared<RunningStats<double>>(RunningStats<double>::identity(c));
  if (infer) {
    for (int i = 0; i < c; ++i) {
      stats->mean[i] = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
      stats->var[i] = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    }
  }
  const auto mode = infer ? BatchNormMode::kInfer : BatchNormMode::kTrain;
  auto f = [stats, mode, fused](const std::vector<TensorD>& in) {
    // Running statistics only feed infer mode; keep them fixed across evaluations.
    RunningStats<double> local = *stats;
    return fused ? batch_norm_leaky_relu(in[0], in[1], in[2], mode, local, {}, 0.2)
                 : batch_norm(in[0], in[1], in[2], mode, local);
  };
  // For the fused op keep the shift far from the kink relative to spread of
  // the normalised values.
  return {projected(seed, f),
          {random_tensor(shape, rng, -2, 2), random_tensor({c}, rng, 0.5, 1.5), random_tensor({c}, rng, -0.5, 0.5)}};
}

GradientInstance non_local_block_case(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  auto block = std::make_shared<NonLocalBlockParams<double>>(init_block<double>(cin, cout, 0.2, rng));
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto* t : {&block->fuse_bias, &block->first_conv.beta_shift, &block->mid_pointwise.beta_shift,
                  &block->mid_conv.beta_shift}) {
    for (auto& v : t->values_mut()) v = u(rng);
  }
  const MidPathOrder order = pick(rng, 0, 1) ? MidPathOrder::kPointwiseFirst : MidPathOrder::kConvFirst;
  std::vector<TensorD> inputs{random_tensor({pick(rng, 1, 2), pick(rng, 3, 4), pick(rng, 3, 4), cin}, rng),
                              block->first_conv.kernel,
                              block->first_conv.gamma,
                              block->first_conv.beta_shift,
                              block->mid_pointwise.kernel,
                              block->mid_pointwise.gamma,
                              block->mid_pointwise.beta_shift,
                              block->mid_conv.kernel,
                              block->mid_conv.gamma,
                              block->mid_conv.beta_shift,
                              block->fuse_kernel,
                              block->fuse_bias};
  auto f = [block, order](const std::vector<TensorD>& in) {
    BlockOptions opts;
    opts.mid_order = order;
    return non_local_block(in[0], *block, opts);
  };
  return {projected(seed, f), inputs};
}

const std::vector<GradientCase> kCases = {
    {"add",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng);
       return {projected(s, [](const auto& in) { return add(in[0], in[1]); }),
               {random_tensor(sh, rng), random_tensor(sh, rng)}};
     }},
    {"sub",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng);
       return {projected(s, [](const auto& in) { return sub(in[0], in[1]); }),
               {random_tensor(sh, rng), random_tensor(sh, rng)}};
     }},
    {"mul",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng);
       return {projected(s, [](const auto& in) { return mul(in[0], in[1]); }),
               {random_tensor(sh, rng), random_tensor(sh, rng)}};
     }},
    {"scale", [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return scale(x, -1.7); }, -1, 1); }},
    {"add_scalar", [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return add_scalar(x, 0.3); }, -1, 1); }},
    {"exp", [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return exp(x); }, -2, 2); }},
    {"square", [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return square(x); }, -2, 2); }},
    {"abs", [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return abs(x); }, -2, 2, {0.0}); }},
    {"clamp",
     [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return clamp(x, -0.5, 0.5); }, -1, 1, {-0.5, 0.5}); }},
    {"sigmoid", [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return sigmoid(x); }, -4, 4); }},
    {"leaky_relu",
     [](std::uint64_t s) { return unary(s, [](const TensorD& x) { return leaky_relu(x, 0.2); }, -2, 2, {0.0}); }},
    {"sum",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {[](const auto& in) { return scale(sum(square(in[0])), 0.5); }, {random_tensor(image_shape(rng), rng)}};
     }},
    {"mean",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {[](const auto& in) { return mean(square(in[0])); }, {random_tensor(image_shape(rng), rng)}};
     }},
    {"conv2d_same", [](std::uint64_t s) { return conv_case(s, 1, Padding::kSame); }},
    {"conv2d_valid", [](std::uint64_t s) { return conv_case(s, 1, Padding::kValid); }},
    {"conv2d_stride2", [](std::uint64_t s) { return conv_case(s, 2, Padding::kSame); }},
    {"pointwise_conv",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng, 5, 4);
       return {projected(s, [](const auto& in) { return pointwise_conv(in[0], in[1]); }),
               {random_tensor(sh, rng), random_tensor({1, 1, sh[3], pick(rng, 1, 4)}, rng)}};
     }},
    {"bias_add",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng);
       return {projected(s, [](const auto& in) { return bias_add(in[0], in[1]); }),
               {random_tensor(sh, rng), random_tensor({sh[3]}, rng)}};
     }},
    {"batch_norm_train", [](std::uint64_t s) { return batch_norm_case(s, false, false, false); }},
    {"batch_norm_train_rank2", [](std::uint64_t s) { return batch_norm_case(s, true, false, false); }},
    {"batch_norm_infer", [](std::uint64_t s) { return batch_norm_case(s, false, true, false); }},
    {"batch_norm_leaky_relu_train", [](std::uint64_t s) { return batch_norm_case(s, false, false, true); }},
    {"batch_norm_leaky_relu_infer", [](std::uint64_t s) { return batch_norm_case(s, false, true, true); }},
    {"global_avg_pool",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {projected(s, [](const auto& in) { return global_avg_pool(in[0]); }),
               {random_tensor(image_shape(rng), rng)}};
     }},
    {"avg_pool2x",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {projected(s, [](const auto& in) { return avg_pool2x(in[0]); }),
               {random_tensor({pick(rng, 1, 2), 2 * pick(rng, 1, 3), 2 * pick(rng, 1, 3), pick(rng, 1, 3)}, rng)}};
     }},
    {"avg_pool3",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {projected(s, [](const auto& in) { return avg_pool(in[0], 3); }),
               {random_tensor({1, 3 * pick(rng, 1, 2), 3 * pick(rng, 1, 2), pick(rng, 1, 2)}, rng)}};
     }},
    {"upsample2x_nearest",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {projected(s, [](const auto& in) { return upsample2x(in[0], UpsampleMode::kNearest); }),
               {random_tensor(image_shape(rng, 4), rng)}};
     }},
    {"upsample2x_bilinear",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       return {projected(s, [](const auto& in) { return upsample2x(in[0], UpsampleMode::kBilinear); }),
               {random_tensor(image_shape(rng, 4), rng)}};
     }},
    {"concat_channels",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       Shape a = image_shape(rng), b = a;
       b[3] = pick(rng, 1, 3);
       return {projected(s, [](const auto& in) { return concat_channels(in[0], in[1]); }),
               {random_tensor(a, rng), random_tensor(b, rng)}};
     }},
    {"dense",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const int n = pick(rng, 1, 3), d = pick(rng, 1, 5), e = pick(rng, 1, 4);
       return {projected(s, [](const auto& in) { return dense(in[0], in[1], in[2]); }),
               {random_tensor({n, d}, rng), random_tensor({d, e}, rng), random_tensor({e}, rng)}};
     }},
    {"broadcast_spatial",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const int h = pick(rng, 1, 4), w = pick(rng, 1, 4);
       return {projected(s, [h, w](const auto& in) { return broadcast_spatial(in[0], h, w); }),
               {random_tensor({pick(rng, 1, 2), pick(rng, 1, 4)}, rng)}};
     }},
    {"slice_batch",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const int n = pick(rng, 2, 4);
       const int begin = pick(rng, 0, n - 1), end = pick(rng, begin + 1, n);
       return {projected(s, [begin, end](const auto& in) { return slice_batch(in[0], begin, end); }),
               {random_tensor({n, 2, 3, 2}, rng)}};
     }},
    {"non_local_block", non_local_block_case},
    {"reparameterize",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const int m = pick(rng, 1, 3), j = pick(rng, 1, 6);
       const TensorD eps = random_tensor({m, j}, rng, -2, 2, false);
       return {projected(s,
                         [eps](const auto& in) {
                           return reparameterize(LatentDistribution<double>{in[0], in[1]}, eps);
                         }),
               {random_tensor({m, j}, rng), random_tensor({m, j}, rng, -2, 2)}};
     }},
    {"kl_loss",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const int m = pick(rng, 1, 3), j = pick(rng, 1, 6);
       return {[](const auto& in) { return kl_loss(LatentDistribution<double>{in[0], in[1]}); },
               {random_tensor({m, j}, rng), random_tensor({m, j}, rng, -2, 2)}};
     }},
    {"reconstruction_l2",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng);
       const TensorD target = random_tensor(sh, rng, 0, 1, false);
       return {[target](const auto& in) { return reconstruction_loss(in[0], target, ReconstructionLoss::kL2); },
               {random_tensor(sh, rng, 0, 1)}};
     }},
    {"reconstruction_l1",
     [](std::uint64_t s) -> GradientInstance {
       std::mt19937_64 rng(s);
       const Shape sh = image_shape(rng);
       const TensorD target = random_tensor(sh, rng, 0, 1, false);
       TensorD pred = random_tensor(sh, rng, 0, 1);
       // Keep |pred - target| clear of the kink at zero.
       for (std::size_t i = 0; i < pred.values_mut().size(); ++i) {
         auto& v = pred.values_mut()[i];
         if (std::abs(v - target.vec()[i]) < 1e-3) v = target.vec()[i] + 2e-3;
       }
       return {[target](const auto& in) { return reconstruction_loss(in[0], target, ReconstructionLoss::kL1); },
               {pred}};
     }},
};

}  // namespace

const std::vector<GradientCase>& gradient_cases() { return kCases; }

}  // namespace nlvae::testing
