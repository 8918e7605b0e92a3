#include <gtest/gtest.h>

#include <random>

#include "nlvae/cost_model.hpp"

namespace nlvae {
namespace {

TEST(ConvCost, PointwiseExamples) {
  EXPECT_EQ(pointwise_cost({3, 64, 32, 1}).weights, 2048);
  EXPECT_EQ(pointwise_cost({3, 64, 32, 16}).ops, 524288);
  EXPECT_EQ(pointwise_cost({1, 1, 1, 1}), (ConvCost{1, 1}));
}

TEST(ConvCost, StandardExamples) {
  EXPECT_EQ(standard_cost({3, 64, 32, 1}).weights, 18432);
  EXPECT_EQ(standard_cost({3, 64, 32, 16}).ops, 4718592);
}

TEST(ConvCost, UnitKernelDegeneracy) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::int64_t> u(1, 300);
  for (int i = 0; i < 100; ++i) {
    const ConvCostSpec s{1, u(rng), u(rng), u(rng)};
    EXPECT_EQ(standard_cost(s), pointwise_cost(s));
  }
}

TEST(ConvCost, ReductionIsInverseKernelArea) {
  for (std::int64_t k : {1, 3, 5, 7}) {
    const auto f = reduction_factors({k, 64, 64, 256});
    EXPECT_EQ(f.weights, Ratio::reduced(1, k * k));
    EXPECT_EQ(f.ops, Ratio::reduced(1, k * k));
  }
  EXPECT_EQ(reduction_factors({5, 3, 7, 9}).weights.value(), 0.04);
  EXPECT_EQ(reduction_factors({3, 1, 1, 1}).ops.str(), "1/9");
  EXPECT_EQ(reduction_factors({1, 1, 1, 1}).ops.str(), "1");
}

TEST(ConvCost, WeightAndOpRatiosAgree) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int64_t> u(1, 200), uk(1, 11);
  for (int i = 0; i < 200; ++i) {
    const auto f = reduction_factors({uk(rng), u(rng), u(rng), u(rng)});
    EXPECT_EQ(f.weights, f.ops);
  }
}

TEST(ConvCost, InvalidSpec) { EXPECT_THROW(pointwise_cost({3, 0, 1, 1}), ConfigError); }

TEST(Summary, TotalsAreLayerSums) {
  const auto s = model_cost_summary(ModelConfig{}, 256, 256);
  std::int64_t conv = 0, dense = 0, bias = 0, bn = 0, ops = 0;
  for (const auto& l : s.layers) {
    (l.kind == LayerKind::kDense ? dense : conv) += l.weights;
    bias += l.bias_params;
    bn += l.bn_params;
    ops += l.ops;
    if (l.kind != LayerKind::kDense) {
      EXPECT_EQ(l.ops, l.out_h * l.out_w * l.weights) << l.name;
    }
  }
  EXPECT_EQ(s.conv_weights, conv);
  EXPECT_EQ(s.dense_weights, dense);
  EXPECT_EQ(s.bias_params, bias);
  EXPECT_EQ(s.bn_params, bn);
  EXPECT_EQ(s.ops, ops);
}

TEST(Summary, PointwiseRowsMatchClosedForm) {
  const auto s = model_cost_summary(ModelConfig{}, 64, 64);
  int checked = 0;
  for (const auto& l : s.layers) {
    if (l.kind != LayerKind::kPointwise || l.out_h != l.out_w) continue;
    const auto c = pointwise_cost({1, l.n_in, l.p_out, l.out_h});
    EXPECT_EQ(l.weights, c.weights);
    EXPECT_EQ(l.ops, c.ops);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(Summary, DoublingChannelsQuadruplesHiddenConvWeights) {
  ModelConfig base;
  ModelConfig wide = base;
  for (auto& w : wide.encoder_widths) w *= 2;
  for (auto& w : wide.decoder_widths) w *= 2;
  const auto a = model_cost_summary(base, 64, 64), b = model_cost_summary(wide, 64, 64);
  ASSERT_EQ(a.layers.size(), b.layers.size());
  int checked = 0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    // Layers touching image channels do not double on both sides.
    const bool hidden = a.layers[i].kind != LayerKind::kDense && b.layers[i].n_in == 2 * a.layers[i].n_in &&
                        b.layers[i].p_out == 2 * a.layers[i].p_out;
    if (!hidden) continue;
    EXPECT_EQ(b.layers[i].weights, 4 * a.layers[i].weights) << a.layers[i].name;
    ++checked;
  }
  EXPECT_GT(checked, 20);
  // Without input conditioning every conv except the first and the output is hidden.
  base.condition_on_input = wide.condition_on_input = false;
  base.encoder_widths = {4};
  wide.encoder_widths = {8};
  const auto c = model_cost_summary(base, 32, 32), d = model_cost_summary(wide, 32, 32);
  std::int64_t hidden_a = 0, hidden_b = 0;
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    if (c.layers[i].kind == LayerKind::kDense || c.layers[i].n_in == 3 || c.layers[i].p_out == 3) continue;
    hidden_a += c.layers[i].weights;
    hidden_b += d.layers[i].weights;
  }
  EXPECT_EQ(hidden_b, 4 * hidden_a);
}

TEST(Summary, MatchesParameterEnumeration) {
  for (const auto& cfg : {ModelConfig{}, ModelConfig::with_block_counts(2, 6)}) {
    const auto params = init_params<float>(cfg, 1);
    std::int64_t kernels = 0, dense = 0;
    for (const auto& p : params.parameters()) {
      if (p.tensor.rank() == 4) kernels += p.tensor.numel();
      if (p.tensor.rank() == 2) dense += p.tensor.numel();
    }
    const auto s = model_cost_summary(params, 256, 256);
    EXPECT_EQ(s.conv_weights, kernels);
    EXPECT_EQ(s.dense_weights, dense);
    EXPECT_EQ(s.total_params(), params.parameter_count());
  }
}

TEST(Summary, TextAndCsvRender) {
  const auto s = model_cost_summary(ModelConfig{}, 256, 256);
  const std::string csv = s.to_csv();
  EXPECT_GE(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), s.layers.size() + 1);
  EXPECT_FALSE(s.to_text().empty());
}

}  // namespace
}  // namespace nlvae
