#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "macflow/tensor.hpp"

namespace macflow {

// Seeded random stream. Child streams are derived deterministically from the
// parent seed and a stream id, so independent consumers (episodes, agents,
// evaluation probes) never share draws and never depend on call order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const;

  double normal();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  std::size_t index(std::size_t n);  // uniform in [0, n)
  bool bernoulli(double p);

  Tensor normal_tensor(std::size_t rows, std::size_t cols);
  Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace macflow
