#include "nlvae/cost_model.hpp"

#include <fmt/format.h>

#include <numeric>

namespace nlvae {

void ConvCostSpec::validate() const {
  if (k < 1 || n_in < 1 || p_out < 1 || m_spatial < 1) {
    throw ConfigError(fmt::format("cost spec: K={}, N={}, P={}, M={} must all be >= 1", k, n_in, p_out, m_spatial));
  }
}

Ratio Ratio::reduced(std::int64_t num, std::int64_t den) {
  if (den == 0) throw ContractError("ratio: zero denominator");
  const std::int64_t g = std::gcd(num, den);
  Ratio r{num / g, den / g};
  if (r.den < 0) r = {-r.num, -r.den};
  return r;
}

std::string Ratio::str() const { return den == 1 ? std::to_string(num) : fmt::format("{}/{}", num, den); }

ConvCost pointwise_cost(const ConvCostSpec& s) {
  s.validate();
  const std::int64_t w = s.n_in * s.p_out;
  return {w, s.m_spatial * s.m_spatial * w};
}

ConvCost standard_cost(const ConvCostSpec& s) {
  s.validate();
  const std::int64_t w = s.k * s.k * s.n_in * s.p_out;
  return {w, s.m_spatial * s.m_spatial * w};
}

ReductionFactors reduction_factors(const ConvCostSpec& s) {
  const ConvCost pc = pointwise_cost(s);
  const ConvCost sc = standard_cost(s);
  return {Ratio::reduced(pc.weights, sc.weights), Ratio::reduced(pc.ops, sc.ops)};
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kPointwise: return "pointwise";
    case LayerKind::kDense: return "dense";
  }
  return "?";
}

namespace {

class SummaryBuilder {
 public:
  explicit SummaryBuilder(CostSummary& s) : s_(s) {}

  void conv(const std::string& name, std::int64_t k, std::int64_t n, std::int64_t p, std::int64_t h, std::int64_t w,
            bool bn, bool bias) {
    LayerCost l;
    l.name = name;
    l.kind = k == 1 ? LayerKind::kPointwise : LayerKind::kConv;
    l.k = k;
    l.n_in = n;
    l.p_out = p;
    l.out_h = h;
    l.out_w = w;
    l.weights = k * k * n * p;
    l.ops = h * w * l.weights;
    l.bn_params = bn ? 2 * p : 0;
    l.bias_params = bias ? p : 0;
    add(l);
  }

  void dense(const std::string& name, std::int64_t n, std::int64_t p) {
    LayerCost l;
    l.name = name;
    l.kind = LayerKind::kDense;
    l.n_in = n;
    l.p_out = p;
    l.weights = n * p;
    l.ops = n * p;
    l.bias_params = p;
    add(l);
  }

  void block(const std::string& prefix, std::int64_t cin, std::int64_t cout, std::int64_t h, std::int64_t w,
             MidPathOrder order) {
    conv(prefix + "first_conv", 3, cin, cout, h, w, true, false);
    if (order == MidPathOrder::kPointwiseFirst) {
      conv(prefix + "mid_pointwise", 1, cout, cout, h, w, true, false);
      conv(prefix + "mid_conv", 3, cout, cout, h, w, true, false);
    } else {
      conv(prefix + "mid_conv", 3, cout, cout, h, w, true, false);
      conv(prefix + "mid_pointwise", 1, cout, cout, h, w, true, false);
    }
    conv(prefix + "fuse", 1, 2 * cout, cout, h, w, false, true);
  }

 private:
  void add(const LayerCost& l) {
    (l.kind == LayerKind::kDense ? s_.dense_weights : s_.conv_weights) += l.weights;
    s_.bias_params += l.bias_params;
    s_.bn_params += l.bn_params;
    s_.ops += l.ops;
    s_.layers.push_back(l);
  }

  CostSummary& s_;
};

}  // namespace

CostSummary model_cost_summary(const ModelConfig& config, std::int64_t height, std::int64_t width) {
  config.validate();
  const std::int64_t multiple = config.spatial_multiple();
  if (height < 1 || width < 1 || height % multiple != 0 || width % multiple != 0) {
    throw ContractError(fmt::format("cost summary: input {}x{} must be a positive multiple of {}", height, width,
                                    multiple));
  }
  CostSummary s;
  SummaryBuilder b(s);
  const std::int64_t cond = config.condition_on_input ? 3 : 0;

  std::int64_t channels = 3, h = height, w = width;
  for (std::size_t i = 0; i < config.encoder_widths.size(); ++i) {
    b.block(fmt::format("encoder.{}.", i), channels, config.encoder_widths[i], h, w, config.mid_order);
    channels = config.encoder_widths[i];
    if (i + 1 < config.encoder_widths.size()) {
      h /= 2;
      w /= 2;
    }
  }
  b.dense("mu_head", channels, config.latent_dim);
  b.dense("logvar_head", channels, config.latent_dim);

  const int stages = config.decoder_upsample_stages();
  channels = config.decoder_widths.front();
  b.dense("decoder_seed", config.latent_dim, channels);
  h = height >> stages;
  w = width >> stages;
  for (std::size_t i = 0; i < config.decoder_widths.size(); ++i) {
    if (static_cast<int>(i) < stages) {
      h *= 2;
      w *= 2;
    }
    b.block(fmt::format("decoder.{}.", i), channels + cond, config.decoder_widths[i], h, w, config.mid_order);
    channels = config.decoder_widths[i];
  }
  b.conv("output", 3, channels + cond, 3, height, width, false, true);
  return s;
}

std::string CostSummary::to_csv() const {
  std::string out = "layer,kind,k,n_in,p_out,out_h,out_w,weights,macs,bias_params,bn_params\n";
  for (const auto& l : layers) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", l.name, to_string(l.kind), l.k, l.n_in, l.p_out, l.out_h,
                       l.out_w, l.weights, l.ops, l.bias_params, l.bn_params);
  }
  out += fmt::format("total_conv_weights,,,,,,,{},,,\n", conv_weights);
  out += fmt::format("total_dense_weights,,,,,,,{},,,\n", dense_weights);
  out += fmt::format("total,,,,,,,{},{},{},{}\n", conv_weights + dense_weights, ops, bias_params, bn_params);
  return out;
}

std::string CostSummary::to_text() const {
  std::string out = fmt::format("{:<28} {:>9} {:>3} {:>5} {:>5} {:>9} {:>10} {:>14}\n", "layer", "kind", "K", "N",
                                "P", "out", "weights", "MACs");
  for (const auto& l : layers) {
    out += fmt::format("{:<28} {:>9} {:>3} {:>5} {:>5} {:>9} {:>10} {:>14}\n", l.name, to_string(l.kind), l.k,
                       l.n_in, l.p_out, fmt::format("{}x{}", l.out_h, l.out_w), l.weights, l.ops);
  }
  out += fmt::format("\nconv kernel weights  {}\ndense weights        {}\nbias parameters      {}\n"
                     "batch-norm params    {}\ntotal parameters     {}\ntotal MACs           {}\n",
                     conv_weights, dense_weights, bias_params, bn_params, total_params(), ops);
  return out;
}

}  // namespace nlvae
