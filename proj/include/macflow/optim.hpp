#pragma once

#include <cstdint>

#include "macflow/mlp.hpp"

namespace macflow {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;
  AdamConfig config;

  static AdamState init(const MlpParams& params, AdamConfig config = {});
};

struct AdamResult {
  MlpParams params;
  AdamState state;
};

// Bias-corrected Adam:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Throws if any gradient entry is non-finite.
AdamResult adam_step(const MlpParams& params, const MlpParams& grads, const AdamState& state);

// target' = (1 - tau) * target + tau * online.
MlpParams polyak_update(const MlpParams& target, const MlpParams& online, double tau);

}  // namespace macflow
