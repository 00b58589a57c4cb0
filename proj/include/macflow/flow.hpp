#pragma once

#include <cstddef>
#include <vector>

#include "macflow/autodiff.hpp"
#include "macflow/mlp.hpp"
#include "macflow/optim.hpp"
#include "macflow/rng.hpp"
#include "macflow/spaces.hpp"
#include "macflow/tensor.hpp"

namespace macflow {

// Counts network evaluations. One call of a network on a batch counts once.
struct NfeCounter {
  std::size_t count = 0;
};

// Velocity field v(t, o, x) over the encoded joint action, integrated with a
// fixed-step Euler scheme. Noise and actions share the joint action layout, so
// agent i's noise is the i-th block of the joint noise vector.
class JointFlowPolicy {
 public:
  JointFlowPolicy() = default;
  JointFlowPolicy(JointSpace space, MlpParams velocity, std::size_t steps);

  static MlpArchitecture architecture(const JointSpace& space, std::vector<std::size_t> hidden,
                                      bool layer_norm = true);
  static JointFlowPolicy init(const JointSpace& space, std::vector<std::size_t> hidden,
                              std::size_t steps, Rng& rng, bool layer_norm = true);

  const JointSpace& space() const { return space_; }
  const MlpParams& velocity() const { return velocity_; }
  std::size_t steps() const { return steps_; }
  std::size_t action_dim() const { return space_.joint_action_dim(); }
  std::size_t obs_dim() const { return space_.joint_obs_dim(); }

  JointFlowPolicy with_velocity(MlpParams velocity) const;

 private:
  JointSpace space_;
  MlpParams velocity_;
  std::size_t steps_ = 10;
};

// [t | obs | x] rows; t is a column of per-row times.
Tensor velocity_input(const Tensor& t, const Tensor& obs, const Tensor& x);

// Noise and interpolation times behind one flow-BC evaluation.
struct FlowBcDraw {
  Tensor noise;  // B x joint_action_dim
  Tensor time;   // B x 1, uniform on [0, 1)
};

FlowBcDraw draw_flow_bc(std::size_t batch, std::size_t action_dim, Rng& rng);

// mean_b || v(t_b, o_b, x_t) - (a_b - x0_b) ||^2 with x_t = (1 - t) x0 + t a.
Var flow_bc_loss(const BoundMlp& velocity, const Tensor& obs, const Tensor& act,
                 const FlowBcDraw& draw);
double flow_bc_loss(const JointFlowPolicy& policy, const Tensor& obs, const Tensor& act, Rng& rng);

// One Adam step on the velocity field; returns the pre-update batch loss.
double flow_update(JointFlowPolicy& policy, AdamState& opt, const Tensor& obs, const Tensor& act,
                   Rng& rng);

// M Euler steps of size 1/M from t = 0.
Tensor euler_sample(const JointFlowPolicy& policy, const Tensor& obs, const Tensor& noise,
                    NfeCounter* nfe = nullptr);

struct JointSample {
  Tensor action;
  Tensor noise;
};

JointSample sample_joint_action(const JointFlowPolicy& policy, const Tensor& obs, Rng& rng,
                                NfeCounter* nfe = nullptr);

// Per-row, per-agent action indices from the encoded blocks of each discrete
// agent (continuous agents get index 0 and should not be decoded this way).
// `legal`, if given, holds one mask per agent.
std::vector<std::vector<std::size_t>> decode_discrete(const Tensor& joint_action,
                                                      const JointSpace& space, double temperature,
                                                      Rng& rng,
                                                      const std::vector<std::vector<bool>>* legal = nullptr);

// Raw per-agent environment actions for one row of an encoded joint action:
// continuous blocks are copied, discrete blocks are decoded.
std::vector<AgentAction> joint_row_to_actions(const Tensor& joint_action, std::size_t row,
                                              const JointSpace& space, double temperature,
                                              Rng& rng);

// Re-encodes discrete blocks as exact one-hot vectors (argmax), leaving
// continuous blocks untouched.
Tensor snap_discrete(const Tensor& joint_action, const JointSpace& space);

}  // namespace macflow
