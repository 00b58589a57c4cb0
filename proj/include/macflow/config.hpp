#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "macflow/critic.hpp"
#include "macflow/distill.hpp"

namespace macflow {

struct ExperimentConfig {
  // environment / data
  std::string env = "landmark";  // landmark | pure_coordination | payoff_zeta | xor
  std::string dataset;           // optional JSONL path; generated when empty
  std::uint64_t seed = 0;
  std::uint64_t data_seed = 0;
  std::size_t agents = 3;        // landmark only
  std::size_t episodes = 50;     // landmark trajectories
  std::size_t samples = 2000;    // matrix-game dataset size
  double zeta = 0.5;
  double epsilon_rare = 0.1;
  double mode_std = 0.1;

  // optimization
  std::size_t steps = 1000;
  std::size_t batch_size = 64;
  std::size_t flow_steps = 10;
  double alpha = 3.0;
  double gamma = 0.995;
  double tau = 0.005;
  double policy_lr = 3e-4;
  double value_lr = 3e-4;
  double adam_eps = 1e-5;
  std::vector<std::size_t> flow_hidden{64, 64};
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  bool policy_layer_norm = true;
  bool q_guidance = true;
  bool normalize_q = false;
  std::string discrete_guidance = "expected_q";
  std::string twin_reduction = "mean";
  bool centralized_critic = false;

  // evaluation
  std::size_t eval_interval = 0;  // 0: every 2% of steps
  std::size_t probe_obs = 4;
  std::size_t bound_samples = 256;
  std::size_t lipschitz_pairs = 10000;
  double bound_tol = 0.10;
  std::size_t mi_samples = 2048;
  std::size_t mi_bins = 16;
  std::size_t eval_episodes = 0;  // environment-return evaluation per checkpoint
  bool write_checkpoints = true;

  bool single_thread = true;
  std::string output_dir = "runs/default";

  std::size_t resolved_eval_interval() const;
  CriticConfig critic_config() const;
  ActorConfig actor_config() const;
  AdamConfig policy_adam() const;
  AdamConfig value_adam() const;
  // Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig config_from_json(const nlohmann::json& j);

// key=value with the value parsed as JSON when possible, else as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});
void save_config(const ExperimentConfig& c, const std::filesystem::path& path);

}  // namespace macflow
