#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "macflow/rng.hpp"
#include "macflow/spaces.hpp"
#include "macflow/tensor.hpp"

namespace macflow {

struct JointStep {
  std::vector<std::vector<double>> obs;  // [agent][obs_dim]
  std::vector<AgentAction> act;          // [agent][action_dim or 1]
  std::vector<double> rew;               // [agent]
  bool terminal = false;
};

struct JointTrajectory {
  std::vector<JointStep> steps;
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  std::optional<double> zeta;
  std::string policy;
};

struct OfflineDataset {
  EnvDescriptor env;
  DatasetMeta meta;
  std::vector<JointTrajectory> trajectories;

  std::size_t transition_count() const;
};

// Throws std::invalid_argument naming the first trajectory/step whose shape
// disagrees with the environment's joint space.
void validate_dataset(const OfflineDataset& dataset);

inline constexpr int kDatasetVersion = 1;

// JSON-lines file, UTF-8, LF endings.
//   line 1: {"format":"macflow-dataset","version":1,"env":..,"seed":..,
//            "zeta":..|null,"policy":..,"shared_reward":..,"space":{..},
//            "env_params":{..}}
//   line k: one episode {"obs":[T][I][dim],"act":[T][I][dim|1],
//                        "rew":[T][I],"term":[T]}
void save_dataset(const OfflineDataset& dataset, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);

// Joint transitions as row-aligned matrices. Actions are encoded (one-hot for
// discrete agents). The last step of every episode counts as terminal: its
// successor is itself and the bootstrap is masked.
struct TransitionBatch {
  Tensor obs;       // B x joint_obs_dim
  Tensor act;       // B x joint_action_dim
  Tensor rew;       // B x agents
  Tensor next_obs;  // B x joint_obs_dim
  Tensor terminal;  // B x 1, 1.0 for terminal

  std::size_t size() const { return obs.rows(); }
};

class TransitionBuffer {
 public:
  explicit TransitionBuffer(const OfflineDataset& dataset);

  std::size_t size() const { return all_.obs.rows(); }
  const JointSpace& space() const { return space_; }
  const TransitionBatch& all() const { return all_; }

  TransitionBatch gather(std::span<const std::size_t> rows) const;
  // Uniform sampling with replacement.
  TransitionBatch sample(std::size_t batch_size, Rng& rng) const;

 private:
  JointSpace space_;
  TransitionBatch all_;
};

}  // namespace macflow
