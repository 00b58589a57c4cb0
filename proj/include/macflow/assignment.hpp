#pragma once

#include <cstddef>
#include <vector>

#include "macflow/tensor.hpp"

namespace macflow {

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

// Exact minimum-cost perfect matching on a square cost matrix
// (shortest augmenting paths with row/column potentials, O(n^3)).
// Deterministic for a given matrix.
Assignment solve_assignment(const Tensor& cost);

}  // namespace macflow
