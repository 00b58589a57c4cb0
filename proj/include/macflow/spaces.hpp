#pragma once

#include <cstddef>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "macflow/tensor.hpp"

namespace macflow {

enum class ActionKind { continuous, discrete };

struct AgentSpace {
  std::size_t obs_dim = 0;
  ActionKind kind = ActionKind::continuous;
  // Box dimension for continuous actions, category count for discrete ones.
  // Either way this is the width of the encoded action (one-hot if discrete).
  std::size_t action_dim = 0;

  friend bool operator==(const AgentSpace&, const AgentSpace&) = default;
};

// Per-agent observation/action layout of a multi-agent problem. Joint
// vectors concatenate the agents in index order.
class JointSpace {
 public:
  JointSpace() = default;
  explicit JointSpace(std::vector<AgentSpace> agents);

  std::size_t agent_count() const { return agents_.size(); }
  const AgentSpace& agent(std::size_t i) const { return agents_.at(i); }
  const std::vector<AgentSpace>& agents() const { return agents_; }

  std::size_t joint_obs_dim() const { return obs_offsets_.back(); }
  std::size_t joint_action_dim() const { return act_offsets_.back(); }
  std::size_t obs_offset(std::size_t i) const { return obs_offsets_.at(i); }
  std::size_t action_offset(std::size_t i) const { return act_offsets_.at(i); }
  bool any_discrete() const;

  friend bool operator==(const JointSpace& a, const JointSpace& b) { return a.agents_ == b.agents_; }

 private:
  std::vector<AgentSpace> agents_;
  std::vector<std::size_t> obs_offsets_{0};
  std::vector<std::size_t> act_offsets_{0};
};

nlohmann::json to_json(const JointSpace& space);
JointSpace joint_space_from_json(const nlohmann::json& j);

// Identifies an environment and everything needed to rebuild it.
struct EnvDescriptor {
  std::string tag;  // landmark | pure_coordination | payoff_zeta | xor
  JointSpace space;
  // Shared-reward games give every agent the team reward; otherwise the team
  // reward is the sum of the per-agent rewards.
  bool shared_reward = true;
  nlohmann::json params = nlohmann::json::object();

  double team_reward(std::span<const double> per_agent) const;
  friend bool operator==(const EnvDescriptor&, const EnvDescriptor&) = default;
};

// One agent's raw action: a float vector (continuous) or a single category
// index stored as a double (discrete).
using AgentAction = std::vector<double>;

// Raw per-agent actions -> encoded joint row (one-hot for discrete agents).
std::vector<double> encode_joint_action(const JointSpace& space,
                                        std::span<const AgentAction> actions);

// Per-agent action choice from a block of scores. Temperature 0 means
// argmax (lowest index on ties); otherwise a softmax(block / temperature)
// sample. Masked-out entries are never chosen.
std::size_t decode_discrete_block(std::span<const double> block, double temperature,
                                  const std::vector<bool>* legal, double uniform_draw);

}  // namespace macflow
