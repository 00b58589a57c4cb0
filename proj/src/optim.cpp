#include "macflow/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace macflow {

AdamState AdamState::init(const MlpParams& params, AdamConfig config) {
  if (!(config.learning_rate >= 0.0) || !(config.epsilon > 0.0)) {
    throw std::invalid_argument("Adam: learning rate must be >= 0 and epsilon > 0");
  }
  return AdamState{params.zeros_like(), params.zeros_like(), 0, config};
}

AdamResult adam_step(const MlpParams& params, const MlpParams& grads, const AdamState& state) {
  if (!params.same_structure(grads) || !params.same_structure(state.first_moment)) {
    throw std::invalid_argument("adam_step: parameter, gradient and state shapes differ");
  }
  if (!grads.all_finite()) {
    throw std::runtime_error("adam_step: non-finite gradient at optimizer step " +
                             std::to_string(state.step + 1));
  }
  const AdamConfig& c = state.config;
  AdamResult out{params, state};
  out.state.step = state.step + 1;
  const double t = static_cast<double>(out.state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);

  std::vector<const Tensor*> g;
  grads.for_each_tensor([&](const Tensor& x) { g.push_back(&x); });
  std::vector<Tensor*> m, v;
  out.state.first_moment.for_each_tensor([&](Tensor& x) { m.push_back(&x); });
  out.state.second_moment.for_each_tensor([&](Tensor& x) { v.push_back(&x); });

  std::size_t k = 0;
  out.params.for_each_tensor([&](Tensor& p) {
    const Tensor& gk = *g[k];
    Tensor& mk = *m[k];
    Tensor& vk = *v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      mk[i] = c.beta1 * mk[i] + (1.0 - c.beta1) * gk[i];
      vk[i] = c.beta2 * vk[i] + (1.0 - c.beta2) * gk[i] * gk[i];
      const double m_hat = mk[i] / bc1;
      const double v_hat = vk[i] / bc2;
      p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    ++k;
  });
  return out;
}

MlpParams polyak_update(const MlpParams& target, const MlpParams& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("polyak_update: tau must lie in [0, 1], got " + std::to_string(tau));
  }
  return zip_params(target, online,
                    [tau](double t, double o) { return t + tau * (o - t); });
}

}  // namespace macflow
