#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "macflow/autodiff.hpp"
#include "macflow/critic.hpp"
#include "macflow/flow.hpp"
#include "macflow/mlp.hpp"
#include "macflow/optim.hpp"
#include "macflow/rng.hpp"

namespace macflow {

enum class DiscreteGuidance { expected_q, straight_through };

std::string to_string(DiscreteGuidance g);
DiscreteGuidance discrete_guidance_from_string(const std::string& s);

struct ActorConfig {
  double alpha = 3.0;
  bool q_guidance = true;
  // Divide the Q term by the batch mean |Q_tot| (held constant).
  bool normalize_q = false;
  DiscreteGuidance discrete = DiscreteGuidance::expected_q;
};

// Decentralized one-step policies mu_i(o_i, z_i). Agent i's noise z_i has the
// width of its encoded action block; discrete agents output logits.
class OneStepPolicySet {
 public:
  OneStepPolicySet() = default;
  OneStepPolicySet(JointSpace space, std::vector<MlpParams> nets);

  static MlpArchitecture architecture(const AgentSpace& agent, std::vector<std::size_t> hidden,
                                      bool layer_norm = true);
  static OneStepPolicySet init(const JointSpace& space, std::vector<std::size_t> hidden, Rng& rng,
                               bool layer_norm = true);

  const JointSpace& space() const { return space_; }
  std::size_t agent_count() const { return nets_.size(); }
  const MlpParams& net(std::size_t i) const { return nets_.at(i); }
  MlpParams& net(std::size_t i) { return nets_.at(i); }

 private:
  JointSpace space_;
  std::vector<MlpParams> nets_;
};

// Row-aligned per-agent outputs concatenated into the joint layout.
Tensor one_step_forward(const OneStepPolicySet& set, const Tensor& joint_obs,
                        const Tensor& joint_noise, NfeCounter* nfe = nullptr);

std::vector<BoundMlp> bind_policies(Tape& tape, const OneStepPolicySet& set, bool trainable);
Var one_step_apply(const std::vector<BoundMlp>& nets, const OneStepPolicySet& set,
                   const Tensor& joint_obs, const Tensor& joint_noise);

// mean_b sum_i || out_i - target_i ||^2 (target held constant).
Var distill_loss(Var one_step_out, const Tensor& flow_target);
// Draws shared noise z, returns the loss of mu_w(o, z) against mu_phi(o, z).
double distill_loss(const OneStepPolicySet& set, const JointFlowPolicy& flow, const Tensor& joint_obs,
                    Rng& rng);

struct DistillBatchResult {
  double distill_loss = 0.0;
  double q_term = 0.0;
  double total_actor_loss = 0.0;
};

struct ActorTerms {
  Var total;
  DistillBatchResult values;
};

// total = -q_term + alpha * distill, with q_term the mean Q_tot of the
// one-step actions. Critic parameters enter as constants.
ActorTerms actor_loss(const std::vector<BoundMlp>& nets, const OneStepPolicySet& set,
                      const CriticEnsemble& critics, const Tensor& joint_obs,
                      const Tensor& joint_noise, const Tensor& flow_target,
                      const ActorConfig& config);
DistillBatchResult actor_loss(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                              const CriticEnsemble& critics, const Tensor& joint_obs, Rng& rng,
                              const ActorConfig& config);

struct ActorOptimizer {
  std::vector<AdamState> nets;
  static ActorOptimizer init(const OneStepPolicySet& set, AdamConfig config);
};

// One Adam step on every one-step net with shared noise drawn from `rng`.
DistillBatchResult actor_update(OneStepPolicySet& set, ActorOptimizer& opt,
                                const JointFlowPolicy& flow, const CriticEnsemble& critics,
                                const Tensor& joint_obs, Rng& rng, const ActorConfig& config);

// A single network evaluation for agent i: z_i ~ N(0, I), returns the raw
// action (continuous) or the decoded index (discrete).
AgentAction one_step_act(const OneStepPolicySet& set, std::size_t agent, std::span<const double> obs,
                         Rng& rng, NfeCounter* nfe = nullptr, double temperature = 0.0);

// ---- bound checks -----------------------------------------------------------

struct Prop1Result {
  double w2_exact = 0.0;      // mean over observations of exact empirical W2
  double coupling_rms = 0.0;  // sqrt of the mean shared-noise squared distance
  bool holds = false;
};

struct Prop2Result {
  double value_gap = 0.0;
  double lipschitz = 0.0;
  double bound = 0.0;
  bool holds = false;
};

struct BoundCheck {
  Prop1Result prop1;
  Prop2Result prop2;
  double distill_loss = 0.0;  // on the shared-noise draw
};

inline constexpr std::size_t kMaxExactSamples = 512;

// For every observation row: two independent n-sample sets (flow, one-step)
// for the exact W2, and a third shared-noise draw for the coupling RMS and
// the value gap. The Lipschitz estimate maximizes over the shared-noise
// pairs plus random cross pairs from the sample pools, `pair_count` in total.
BoundCheck check_bounds(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                        const CriticEnsemble& critics, const Tensor& obs_set, std::size_t samples,
                        std::size_t pair_count, double tol, Rng& rng);

Prop1Result verify_prop1(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                         const Tensor& obs_set, std::size_t samples, double tol, Rng& rng);
Prop2Result verify_prop2(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                         const CriticEnsemble& critics, const Tensor& obs_set, std::size_t samples,
                         std::size_t pair_count, double tol, Rng& rng);

}  // namespace macflow
