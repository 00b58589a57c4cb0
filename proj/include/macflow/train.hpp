#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "macflow/checkpoint.hpp"
#include "macflow/config.hpp"
#include "macflow/critic.hpp"
#include "macflow/dataset.hpp"
#include "macflow/distill.hpp"
#include "macflow/flow.hpp"
#include "macflow/metrics.hpp"

namespace macflow {

// Dataset named by the config: loaded from `dataset` or generated from the
// env fields with `data_seed`.
OfflineDataset make_dataset(const ExperimentConfig& config);

struct TrainingState {
  JointFlowPolicy flow;
  CriticEnsemble critics;
  OneStepPolicySet actors;
  AdamState flow_opt;
  CriticOptimizer critic_opt;
  ActorOptimizer actor_opt;
};

TrainingState init_training(const ExperimentConfig& config, const JointSpace& space);

struct StepLosses {
  double flow_bc = 0.0;
  double critic = 0.0;
  double mean_q = 0.0;
  DistillBatchResult actor;
};

// One iteration: flow-BC update, critic TD update with a' from the updated
// flow, then the actor (distill + Q) update, all on the same batch.
StepLosses train_step(TrainingState& state, const TransitionBatch& batch,
                      const ExperimentConfig& config, Rng& flow_rng, Rng& critic_rng,
                      Rng& actor_rng);

struct CheckpointEval {
  std::size_t step = 0;
  BoundCheck bounds;
  double mi_joint = 0.0;
  double mi_factored = 0.0;
  std::optional<double> return_joint;
  std::optional<double> return_factored;
};

struct TrainResult {
  std::filesystem::path dir;
  TrainingState state;
  Tensor probe_obs;
  std::vector<StepLosses> losses;        // one per step
  std::vector<CheckpointEval> evals;     // step 0, every interval, final step
  std::optional<std::string> aborted;    // diagnostic if training stopped early
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes config.json, metrics.csv, bounds.csv and checkpoints/ under
// config.output_dir. A non-finite loss or gradient stops training; the last
// written checkpoint is kept and the result carries the diagnostic.
TrainResult train(const ExperimentConfig& config);
TrainResult train(const ExperimentConfig& config, const OfflineDataset& dataset);

// Evenly spaced dataset observations used for all checkpoint estimates.
Tensor probe_observations(const TransitionBuffer& buffer, std::size_t count);

// Mean over probe rows and agent pairs of the plug-in MI between agents'
// first action components (decoded indices for discrete agents).
double inter_agent_mi(const Tensor& joint_actions, const JointSpace& space, std::size_t bins);
double inter_agent_mi(const std::function<Tensor(const Tensor& obs, Rng& rng)>& sampler,
                      const Tensor& probe_obs, const JointSpace& space, std::size_t samples,
                      std::size_t bins, Rng& rng);

JointActor joint_flow_actor(const JointFlowPolicy& flow, double temperature = 0.0);
JointActor one_step_actor(const OneStepPolicySet& set, double temperature = 0.0);

std::vector<NamedNetwork> checkpoint_networks(const TrainingState& state);
void save_training_checkpoint(const TrainingState& state, const std::filesystem::path& path);
// Restores network weights into `state` (optimizer moments are not stored).
void load_training_checkpoint(TrainingState& state, const std::filesystem::path& path);

}  // namespace macflow
