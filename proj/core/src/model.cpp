#include "nlvae/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nlvae {

namespace {

constexpr int kDefaultEncoder[] = {32, 64, 64, 128, 128};
constexpr int kDefaultDecoderUpsampled[] = {128, 128, 64, 64};
constexpr int kDecoderFullResWidth = 32;
constexpr int kImageChannels = 3;

}  // namespace

ModelConfig ModelConfig::with_block_counts(int encoder_blocks, int decoder_blocks) {
  if (encoder_blocks < 1 || decoder_blocks < 1) throw ConfigError("block counts must be >= 1");
  ModelConfig cfg;
  cfg.encoder_widths.clear();
  cfg.decoder_widths.clear();
  for (int i = 0; i < encoder_blocks; ++i) cfg.encoder_widths.push_back(kDefaultEncoder[std::min(i, 4)]);
  for (int i = 0; i < decoder_blocks; ++i) {
    cfg.decoder_widths.push_back(i < 4 ? kDefaultDecoderUpsampled[i] : kDecoderFullResWidth);
  }
  return cfg;
}

int ModelConfig::encoder_downsample() const { return 1 << (static_cast<int>(encoder_widths.size()) - 1); }

int ModelConfig::decoder_upsample_stages() const {
  return std::min(upsample_stages, static_cast<int>(decoder_widths.size()));
}

int ModelConfig::spatial_multiple() const { return std::max(encoder_downsample(), 1 << decoder_upsample_stages()); }

void ModelConfig::validate() const {
  auto positive = [](const std::vector<int>& v) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [](int w) { return w > 0; });
  };
  if (!positive(encoder_widths)) throw ConfigError("model: encoder widths must be non-empty and positive");
  if (!positive(decoder_widths)) throw ConfigError("model: decoder widths must be non-empty and positive");
  if (encoder_widths.size() > 12 || upsample_stages > 12) throw ConfigError("model: too many stages");
  if (latent_dim < 1) throw ConfigError("model: latent dimension must be >= 1");
  if (upsample_stages < 0) throw ConfigError("model: upsample stages must be >= 0");
  if (!(leaky_slope > 0 && leaky_slope < 1)) throw ConfigError("model: leaky slope must lie in (0, 1)");
  if (!(bn_eps > 0)) throw ConfigError("model: batch-norm eps must be positive");
  if (!(bn_momentum > 0 && bn_momentum <= 1)) throw ConfigError("model: batch-norm momentum must lie in (0, 1]");
}

namespace {

template <typename T>
Tensor<T> he_normal(Shape shape, std::int64_t fan_in, double slope, std::mt19937_64& rng) {
  const double stddev = std::sqrt(2.0 / (static_cast<double>(fan_in) * (1.0 + slope * slope)));
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from_vector(std::move(shape), std::move(values), true);
}

template <typename T>
ConvUnit<T> init_unit(int k, int cin, int cout, double slope, std::mt19937_64& rng) {
  ConvUnit<T> u;
  u.kernel = he_normal<T>({k, k, cin, cout}, static_cast<std::int64_t>(k) * k * cin, slope, rng);
  u.gamma = Tensor<T>::full({cout}, T(1), true);
  u.beta_shift = Tensor<T>::zeros({cout}, true);
  u.stats = RunningStats<T>::identity(cout);
  return u;
}

template <typename T>
DenseParams<T> init_dense(int in, int out, double slope, bool zero, std::mt19937_64& rng) {
  DenseParams<T> d;
  d.weight = zero ? Tensor<T>::zeros({in, out}, true) : he_normal<T>({in, out}, in, slope, rng);
  d.bias = Tensor<T>::zeros({out}, true);
  return d;
}

template <typename T>
Tensor<T> conv_unit(const Tensor<T>& x, ConvUnit<T>& u, const BlockOptions& o) {
  const Tensor<T> y = u.kernel.dim(0) == 1 ? pointwise_conv(x, u.kernel) : conv2d(x, u.kernel, 1, Padding::kSame);
  return batch_norm_leaky_relu(y, u.gamma, u.beta_shift, o.mode, u.stats, o.bn, static_cast<T>(o.slope));
}

BlockOptions block_options(const ModelConfig& cfg, BatchNormMode mode) {
  BlockOptions o;
  o.mode = mode;
  o.slope = cfg.leaky_slope;
  o.bn = {cfg.bn_eps, cfg.bn_momentum};
  o.mid_order = cfg.mid_order;
  return o;
}

template <typename T>
void append_block(std::vector<NamedTensor<T>>& out, const std::string& prefix, const NonLocalBlockParams<T>& b) {
  auto unit = [&](const std::string& name, const ConvUnit<T>& u) {
    out.push_back({prefix + name + ".kernel", u.kernel});
    out.push_back({prefix + name + ".gamma", u.gamma});
    out.push_back({prefix + name + ".beta", u.beta_shift});
  };
  unit("first_conv", b.first_conv);
  unit("mid_pointwise", b.mid_pointwise);
  unit("mid_conv", b.mid_conv);
  out.push_back({prefix + "fuse.kernel", b.fuse_kernel});
  out.push_back({prefix + "fuse.bias", b.fuse_bias});
}

template <typename T>
void append_stats(std::vector<NamedStats<T>>& out, const std::string& prefix, NonLocalBlockParams<T>& b) {
  out.push_back({prefix + "first_conv.bn", &b.first_conv.stats});
  out.push_back({prefix + "mid_pointwise.bn", &b.mid_pointwise.stats});
  out.push_back({prefix + "mid_conv.bn", &b.mid_conv.stats});
}

template <typename T>
Tensor<T> as_batch(const Tensor<T>& z) {
  if (z.rank() == 2) return z;
  if (z.rank() != 1) throw ShapeError("decode: z must be [J] or [M, J], got " + shape_str(z.shape()));
  // Reshape [J] -> [1, J] through a graph-preserving identity.
  const auto j = z.dim(0);
  return detail::make_result<T>({1, j}, z.vec(), "reshape", {z.node()}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> decode_impl(const Tensor<T>& z_in, NlvaeParams<T>& params, std::int64_t height, std::int64_t width,
                      const Tensor<T>* conditioning, BatchNormMode mode) {
  const ModelConfig& cfg = params.config;
  const Tensor<T> z = as_batch(z_in);
  if (z.dim(1) != cfg.latent_dim) {
    throw ShapeError("decode: latent dimension " + std::to_string(z.dim(1)) + " != " + std::to_string(cfg.latent_dim));
  }
  const int stages = cfg.decoder_upsample_stages();
  const std::int64_t factor = std::int64_t{1} << stages;
  if (height < factor || width < factor || height % factor != 0 || width % factor != 0) {
    throw ContractError("decode: target " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not reachable by " + std::to_string(stages) + " 2x upsampling stages");
  }
  const BlockOptions opts = block_options(cfg, mode);
  Tensor<T> h = broadcast_spatial(dense(z, params.decoder_seed.weight, params.decoder_seed.bias), height / factor,
                                  width / factor);
  std::map<std::int64_t, Tensor<T>> pyramid;
  auto conditioning_at = [&](std::int64_t rows) -> Tensor<T> {
    const std::int64_t f = height / rows;
    if (f == 1) return *conditioning;
    auto it = pyramid.find(f);
    if (it == pyramid.end()) it = pyramid.emplace(f, avg_pool(*conditioning, static_cast<int>(f))).first;
    return it->second;
  };
  for (std::size_t i = 0; i < params.decoder_blocks.size(); ++i) {
    if (static_cast<int>(i) < stages) h = upsample2x(h, cfg.upsample);
    if (conditioning) h = concat_channels(h, conditioning_at(h.dim(1)));
    h = non_local_block(h, params.decoder_blocks[i], opts);
  }
  if (conditioning) h = concat_channels(h, *conditioning);
  return sigmoid(bias_add(conv2d(h, params.output_kernel, 1, Padding::kSame), params.output_bias));
}

}  // namespace

template <typename T>
NonLocalBlockParams<T> init_block(int in_channels, int out_channels, double slope, std::mt19937_64& rng) {
  NonLocalBlockParams<T> b;
  b.in_channels = in_channels;
  b.out_channels = out_channels;
  b.first_conv = init_unit<T>(3, in_channels, out_channels, slope, rng);
  b.mid_pointwise = init_unit<T>(1, out_channels, out_channels, slope, rng);
  b.mid_conv = init_unit<T>(3, out_channels, out_channels, slope, rng);
  b.fuse_kernel = he_normal<T>({1, 1, 2 * out_channels, out_channels}, 2 * out_channels, slope, rng);
  b.fuse_bias = Tensor<T>::zeros({out_channels}, true);
  return b;
}

template <typename T>
NlvaeParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  NlvaeParams<T> p;
  p.config = config;
  const double slope = config.leaky_slope;
  const int cond = config.condition_on_input ? kImageChannels : 0;

  int channels = kImageChannels;
  for (int w : config.encoder_widths) {
    p.encoder_blocks.push_back(init_block<T>(channels, w, slope, rng));
    channels = w;
  }
  p.mu_head = init_dense<T>(channels, config.latent_dim, slope, config.zero_init_heads, rng);
  p.logvar_head = init_dense<T>(channels, config.latent_dim, slope, config.zero_init_heads, rng);

  const int seed_channels = config.decoder_widths.front();
  p.decoder_seed = init_dense<T>(config.latent_dim, seed_channels, slope, false, rng);
  channels = seed_channels;
  for (int w : config.decoder_widths) {
    p.decoder_blocks.push_back(init_block<T>(channels + cond, w, slope, rng));
    channels = w;
  }
  p.output_kernel = he_normal<T>({3, 3, channels + cond, kImageChannels}, 9 * (channels + cond), slope, rng);
  p.output_bias = Tensor<T>::zeros({kImageChannels}, true);
  return p;
}

template <typename T>
std::vector<NamedTensor<T>> NlvaeParams<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < encoder_blocks.size(); ++i) {
    append_block(out, "encoder." + std::to_string(i) + ".", encoder_blocks[i]);
  }
  out.push_back({"mu_head.weight", mu_head.weight});
  out.push_back({"mu_head.bias", mu_head.bias});
  out.push_back({"logvar_head.weight", logvar_head.weight});
  out.push_back({"logvar_head.bias", logvar_head.bias});
  out.push_back({"decoder_seed.weight", decoder_seed.weight});
  out.push_back({"decoder_seed.bias", decoder_seed.bias});
  for (std::size_t i = 0; i < decoder_blocks.size(); ++i) {
    append_block(out, "decoder." + std::to_string(i) + ".", decoder_blocks[i]);
  }
  out.push_back({"output.kernel", output_kernel});
  out.push_back({"output.bias", output_bias});
  return out;
}

template <typename T>
std::vector<NamedStats<T>> NlvaeParams<T>::buffers() {
  std::vector<NamedStats<T>> out;
  for (std::size_t i = 0; i < encoder_blocks.size(); ++i) {
    append_stats(out, "encoder." + std::to_string(i) + ".", encoder_blocks[i]);
  }
  for (std::size_t i = 0; i < decoder_blocks.size(); ++i) {
    append_stats(out, "decoder." + std::to_string(i) + ".", decoder_blocks[i]);
  }
  return out;
}

template <typename T>
std::int64_t NlvaeParams<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

namespace {

template <typename T>
Tensor<T> fresh_copy(const Tensor<T>& t) {
  return Tensor<T>::from_vector(t.shape(), t.vec(), t.requires_grad());
}

template <typename T>
void deep_copy_unit(ConvUnit<T>& u) {
  u.kernel = fresh_copy(u.kernel);
  u.gamma = fresh_copy(u.gamma);
  u.beta_shift = fresh_copy(u.beta_shift);
}

template <typename T>
void deep_copy_block(NonLocalBlockParams<T>& b) {
  deep_copy_unit(b.first_conv);
  deep_copy_unit(b.mid_pointwise);
  deep_copy_unit(b.mid_conv);
  b.fuse_kernel = fresh_copy(b.fuse_kernel);
  b.fuse_bias = fresh_copy(b.fuse_bias);
}

template <typename T>
void deep_copy_dense(DenseParams<T>& d) {
  d.weight = fresh_copy(d.weight);
  d.bias = fresh_copy(d.bias);
}

}  // namespace

template <typename T>
NlvaeParams<T> NlvaeParams<T>::clone() const {
  NlvaeParams<T> copy = *this;
  for (auto& b : copy.encoder_blocks) deep_copy_block(b);
  for (auto& b : copy.decoder_blocks) deep_copy_block(b);
  deep_copy_dense(copy.mu_head);
  deep_copy_dense(copy.logvar_head);
  deep_copy_dense(copy.decoder_seed);
  copy.output_kernel = fresh_copy(output_kernel);
  copy.output_bias = fresh_copy(output_bias);
  return copy;
}

template <typename T>
Tensor<T> non_local_block(const Tensor<T>& x, NonLocalBlockParams<T>& params, const BlockOptions& options) {
  if (x.rank() != 4 || x.dim(3) != params.in_channels) {
    throw ShapeError("non_local_block: expected " + std::to_string(params.in_channels) + " input channels, got " +
                     shape_str(x.shape()));
  }
  const Tensor<T> f1 = conv_unit(x, params.first_conv, options);
  Tensor<T> f3;
  if (options.mid_order == MidPathOrder::kPointwiseFirst) {
    f3 = conv_unit(conv_unit(f1, params.mid_pointwise, options), params.mid_conv, options);
  } else {
    f3 = conv_unit(conv_unit(f1, params.mid_conv, options), params.mid_pointwise, options);
  }
  return bias_add(pointwise_conv(concat_channels(f1, f3), params.fuse_kernel), params.fuse_bias);
}

template <typename T>
LatentDistribution<T> encode(const Tensor<T>& x, NlvaeParams<T>& params, BatchNormMode mode) {
  const ModelConfig& cfg = params.config;
  if (x.rank() != 4 || x.dim(3) != kImageChannels) throw ShapeError("encode: expected [M, H, W, 3], got " + shape_str(x.shape()));
  const int multiple = cfg.encoder_downsample();
  if (x.dim(1) % multiple != 0 || x.dim(2) % multiple != 0) {
    throw ContractError("encode: spatial dims " + shape_str(x.shape()) + " must be divisible by " +
                        std::to_string(multiple));
  }
  const BlockOptions opts = block_options(cfg, mode);
  Tensor<T> h = x;
  for (std::size_t i = 0; i < params.encoder_blocks.size(); ++i) {
    h = non_local_block(h, params.encoder_blocks[i], opts);
    if (i + 1 < params.encoder_blocks.size()) h = avg_pool2x(h);
  }
  const Tensor<T> pooled = global_avg_pool(h);
  LatentDistribution<T> dist;
  dist.mu = dense(pooled, params.mu_head.weight, params.mu_head.bias);
  dist.log_var = clamp(dense(pooled, params.logvar_head.weight, params.logvar_head.bias), static_cast<T>(-kLogVarBound),
                       static_cast<T>(kLogVarBound));
  return dist;
}

template <typename T>
Tensor<T> reparameterize(const LatentDistribution<T>& dist, const Tensor<T>& eps) {
  if (dist.mu.shape() != dist.log_var.shape()) throw ShapeError("reparameterize: mu and log_var shapes differ");
  if (eps.shape() != dist.mu.shape()) throw ShapeError("reparameterize: eps shape " + shape_str(eps.shape()));
  const Tensor<T> sigma = exp(scale(dist.log_var, T(0.5)));
  return add(dist.mu, mul(sigma, eps.detach()));
}

template <typename T>
Tensor<T> standard_normal(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from_vector(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> reparameterize(const LatentDistribution<T>& dist, std::mt19937_64& rng) {
  return reparameterize(dist, standard_normal<T>(dist.mu.shape(), rng));
}

template <typename T>
Tensor<T> sample_prior(int latent_dim, std::mt19937_64& rng) {
  if (latent_dim < 1) throw ContractError("sample_prior: latent dimension must be >= 1");
  return standard_normal<T>({latent_dim}, rng);
}

template <typename T>
Tensor<T> decode(const Tensor<T>& z, NlvaeParams<T>& params, const Tensor<T>& conditioning, BatchNormMode mode) {
  if (conditioning.rank() != 4 || conditioning.dim(3) != kImageChannels) {
    throw ShapeError("decode: conditioning must be [M, H, W, 3], got " + shape_str(conditioning.shape()));
  }
  const std::int64_t m = z.rank() == 2 ? z.dim(0) : 1;
  if (conditioning.dim(0) != m) throw ShapeError("decode: batch of z and conditioning differ");
  const Tensor<T>* cond = params.config.condition_on_input ? &conditioning : nullptr;
  return decode_impl(z, params, conditioning.dim(1), conditioning.dim(2), cond, mode);
}

template <typename T>
Tensor<T> decode(const Tensor<T>& z, NlvaeParams<T>& params, std::int64_t height, std::int64_t width,
                 BatchNormMode mode) {
  if (params.config.condition_on_input) {
    throw ContractError("decode: this model is conditioned on its input; pass the conditioning tensor");
  }
  return decode_impl<T>(z, params, height, width, nullptr, mode);
}

#define NLVAE_INSTANTIATE_MODEL(T)                                                                            \
  template struct NlvaeParams<T>;                                                                            \
  template NlvaeParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                 \
  template NonLocalBlockParams<T> init_block<T>(int, int, double, std::mt19937_64&);                         \
  template Tensor<T> non_local_block<T>(const Tensor<T>&, NonLocalBlockParams<T>&, const BlockOptions&);     \
  template LatentDistribution<T> encode<T>(const Tensor<T>&, NlvaeParams<T>&, BatchNormMode);                \
  template Tensor<T> reparameterize<T>(const LatentDistribution<T>&, const Tensor<T>&);                      \
  template Tensor<T> reparameterize<T>(const LatentDistribution<T>&, std::mt19937_64&);                      \
  template Tensor<T> standard_normal<T>(Shape, std::mt19937_64&);                                            \
  template Tensor<T> sample_prior<T>(int, std::mt19937_64&);                                                 \
  template Tensor<T> decode<T>(const Tensor<T>&, NlvaeParams<T>&, const Tensor<T>&, BatchNormMode);          \
  template Tensor<T> decode<T>(const Tensor<T>&, NlvaeParams<T>&, std::int64_t, std::int64_t, BatchNormMode);

NLVAE_INSTANTIATE_MODEL(float)
NLVAE_INSTANTIATE_MODEL(double)

#undef NLVAE_INSTANTIATE_MODEL

}  // namespace nlvae
