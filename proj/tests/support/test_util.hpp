#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "macflow/mlp.hpp"
#include "macflow/rng.hpp"

namespace macflow::testing {

// y = x W + b with no hidden layers. `w` is row-major in x out.
inline MlpParams linear_net(std::size_t in, std::size_t out, const std::vector<double>& w,
                            const std::vector<double>& b, bool layer_norm = false) {
  MlpParams p = MlpParams::zeros({in, {}, out, layer_norm, Activation::gelu});
  std::copy(w.begin(), w.end(), p.layer(0).weight.values().begin());
  std::copy(b.begin(), b.end(), p.layer(0).bias.values().begin());
  return p;
}

inline MlpParams jitter(MlpParams p, Rng& rng, double scale) {
  p.for_each_tensor([&](Tensor& t) {
    for (double& v : t.values()) v += scale * rng.normal();
  });
  return p;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Worst relative error between `analytic` gradients and 4-point central
// differences of `value` over every entry of every net in `params` (perturbed in place).
inline double fd_check(const std::vector<MlpParams*>& params, const std::vector<MlpParams>& analytic,
                       const std::function<double()>& value, double h = 1e-4) {
  double worst = 0.0;
  for (std::size_t n = 0; n < params.size(); ++n) {
    std::vector<Tensor*> slots;
    params[n]->for_each_tensor([&](Tensor& t) { slots.push_back(&t); });
    std::vector<const Tensor*> grads;
    analytic[n].for_each_tensor([&](const Tensor& t) { grads.push_back(&t); });
    for (std::size_t k = 0; k < slots.size(); ++k) {
      for (std::size_t i = 0; i < slots[k]->size(); ++i) {
        const double orig = (*slots[k])[i];
        const auto at = [&](double x) {
          (*slots[k])[i] = x;
          return value();
        };
        const double fd = (8.0 * (at(orig + h) - at(orig - h)) - (at(orig + 2 * h) - at(orig - 2 * h))) / (12.0 * h);
        (*slots[k])[i] = orig;
        const double e = rel_err(fd, (*grads[k])[i]);
        worst = std::max(worst, e);
      }
    }
  }
  return worst;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("macflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace macflow::testing
