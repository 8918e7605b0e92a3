#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlvae/model.hpp"

namespace nlvae {

/// One convolution for cost purposes: K x K kernel, N input channels,
/// P output channels and an M x M output grid.
struct ConvCostSpec {
  std::int64_t k = 1;
  std::int64_t n_in = 1;
  std::int64_t p_out = 1;
  std::int64_t m_spatial = 1;

  void validate() const;
};

/// Weight count and multiply-accumulate count.
struct ConvCost {
  std::int64_t weights = 0;
  std::int64_t ops = 0;

  bool operator==(const ConvCost&) const = default;
};

/// Exact ratio num / den in lowest terms.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Ratio reduced(std::int64_t num, std::int64_t den);
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;
  bool operator==(const Ratio&) const = default;
};

struct ReductionFactors {
  Ratio weights;  // W_pointwise / W_standard
  Ratio ops;      // O_pointwise / O_standard
};

/// weights = N P, ops = M^2 N P (the kernel extent is ignored).
ConvCost pointwise_cost(const ConvCostSpec& spec);
/// weights = K^2 N P, ops = M^2 K^2 N P.
ConvCost standard_cost(const ConvCostSpec& spec);
ReductionFactors reduction_factors(const ConvCostSpec& spec);

enum class LayerKind { kConv, kPointwise, kDense };

const char* to_string(LayerKind kind);

struct LayerCost {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  std::int64_t k = 1;
  std::int64_t n_in = 0;
  std::int64_t p_out = 0;
  std::int64_t out_h = 1;
  std::int64_t out_w = 1;
  std::int64_t weights = 0;       // kernel or dense matrix entries
  std::int64_t ops = 0;           // multiply-accumulates
  std::int64_t bias_params = 0;   // conv or dense bias
  std::int64_t bn_params = 0;     // learnable gamma and shift
};

struct CostSummary {
  std::vector<LayerCost> layers;
  std::int64_t conv_weights = 0;   // all conv kernels (3x3 and 1x1)
  std::int64_t dense_weights = 0;
  std::int64_t bias_params = 0;
  std::int64_t bn_params = 0;
  std::int64_t ops = 0;

  std::int64_t total_params() const { return conv_weights + dense_weights + bias_params + bn_params; }
  /// One row per layer followed by labelled totals.
  std::string to_csv() const;
  std::string to_text() const;
};

/// Per-layer costs of the model for an input of height x width, in execution order.
CostSummary model_cost_summary(const ModelConfig& config, std::int64_t height, std::int64_t width);

template <typename T>
CostSummary model_cost_summary(const NlvaeParams<T>& params, std::int64_t height, std::int64_t width) {
  return model_cost_summary(params.config, height, width);
}

}  // namespace nlvae
