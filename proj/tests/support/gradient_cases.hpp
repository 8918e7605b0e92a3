#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace nlvae::testing {

/// One randomly drawn gradient-check problem: a scalar loss over `inputs`.
struct GradientInstance {
  LossFn loss;
  std::vector<TensorD> inputs;
};

struct GradientCase {
  std::string name;
  GradientInstance (*make)(std::uint64_t seed);
};

/// Every differentiable op, the fused batch-norm activation, the full
/// non-local block and the latent/objective terms.
const std::vector<GradientCase>& gradient_cases();

}  // namespace nlvae::testing
