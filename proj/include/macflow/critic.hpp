#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "macflow/autodiff.hpp"
#include "macflow/dataset.hpp"
#include "macflow/mlp.hpp"
#include "macflow/optim.hpp"
#include "macflow/rng.hpp"
#include "macflow/spaces.hpp"

namespace macflow {

enum class TwinReduction { mean, min };

std::string to_string(TwinReduction r);
TwinReduction twin_reduction_from_string(const std::string& s);

struct CriticConfig {
  std::vector<std::size_t> hidden{64, 64};
  double gamma = 0.995;
  double tau = 0.005;
  TwinReduction reduction = TwinReduction::mean;
  // One critic over the full joint observation and action instead of one per
  // agent. Its reward is the mean of the per-agent rewards.
  bool centralized = false;
};

// Which columns of the joint observation / action a critic reads.
struct CriticView {
  std::size_t obs_offset = 0;
  std::size_t obs_dim = 0;
  std::size_t act_offset = 0;
  std::size_t act_dim = 0;
  std::vector<std::size_t> agents;  // agents whose rewards it learns (mean)
};

struct TwinCritic {
  MlpParams q1, q2;
  MlpParams target1, target2;
};

// Per-agent twin Q networks (always layer-normed) with Polyak targets.
// Q_tot is the arithmetic mean of the critics' values.
class CriticEnsemble {
 public:
  CriticEnsemble() = default;
  CriticEnsemble(JointSpace space, CriticConfig config, std::vector<TwinCritic> critics);

  static CriticEnsemble init(const JointSpace& space, const CriticConfig& config, Rng& rng);

  const JointSpace& space() const { return space_; }
  const CriticConfig& config() const { return config_; }
  std::size_t critic_count() const { return critics_.size(); }
  const CriticView& view(std::size_t k) const { return views_.at(k); }
  const TwinCritic& critic(std::size_t k) const { return critics_.at(k); }
  TwinCritic& critic(std::size_t k) { return critics_.at(k); }

  Tensor critic_obs(std::size_t k, const Tensor& joint_obs) const;
  Tensor critic_act(std::size_t k, const Tensor& joint_act) const;
  Tensor critic_reward(std::size_t k, const Tensor& rewards) const;

 private:
  JointSpace space_;
  CriticConfig config_;
  std::vector<CriticView> views_;
  std::vector<TwinCritic> critics_;
};

std::vector<CriticView> critic_views(const JointSpace& space, bool centralized);

double reduce_twins(double a, double b, TwinReduction r);

// Reduced twin value of critic k (online or target nets), B x 1.
Tensor q_value(const CriticEnsemble& ens, std::size_t k, const Tensor& critic_obs,
               const Tensor& critic_act, bool target = false);
// Mean over critics, B x 1.
Tensor q_tot(const CriticEnsemble& ens, const Tensor& joint_obs, const Tensor& joint_act,
             bool target = false);

// Twin online critics placed on a tape.
struct BoundCritics {
  std::vector<BoundMlp> q1, q2;
};

BoundCritics bind_critics(Tape& tape, const CriticEnsemble& ens, bool trainable);

// Reduced twin value of critic k on tape, with the action as a tape variable.
Var q_value(const BoundCritics& net, const CriticEnsemble& ens, std::size_t k,
            const Tensor& critic_obs, Var critic_act);
Var q_tot(const BoundCritics& net, const CriticEnsemble& ens, const Tensor& joint_obs,
          Var joint_act);

// Squared TD residual of both twins of every critic against gradient-blocked
// target values r + gamma (1 - terminal) Qbar(o', a'), averaged over batch,
// critics and twins.
Var critic_loss(const BoundCritics& online, const CriticEnsemble& ens, const TransitionBatch& batch,
                const Tensor& next_joint_act);
double critic_loss(const CriticEnsemble& ens, const TransitionBatch& batch,
                   const Tensor& next_joint_act);

struct CriticOptimizer {
  std::vector<AdamState> q1, q2;
  static CriticOptimizer init(const CriticEnsemble& ens, AdamConfig config);
};

struct CriticUpdate {
  double loss = 0.0;
  double mean_q = 0.0;
};

// One Adam step on every online critic followed by the Polyak target update.
CriticUpdate critic_update(CriticEnsemble& ens, CriticOptimizer& opt, const TransitionBatch& batch,
                           const Tensor& next_joint_act);

// max |Q_tot(o, a) - Q_tot(o, y)| / ||a - y|| over row-aligned pairs, skipping
// pairs closer than 1e-9. Returns -1 if no pair qualifies.
double max_lipschitz_ratio(const CriticEnsemble& ens, const Tensor& joint_obs, const Tensor& a,
                           const Tensor& y);

// Draws `pair_count` pairs at each observation row from `sampler` (called
// twice with that row repeated pair_count times) and returns the largest
// ratio. Throws if no pair qualifies.
double estimate_lipschitz(const CriticEnsemble& ens, const Tensor& obs_set,
                          const std::function<Tensor(const Tensor& obs, Rng& rng)>& sampler,
                          std::size_t pair_count, Rng& rng);

}  // namespace macflow
