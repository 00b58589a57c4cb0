#include "macflow/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace macflow {

JointSpace::JointSpace(std::vector<AgentSpace> agents) : agents_(std::move(agents)) {
  if (agents_.empty()) throw std::invalid_argument("joint space needs at least one agent");
  for (const AgentSpace& a : agents_) {
    if (a.obs_dim == 0 || a.action_dim == 0) {
      throw std::invalid_argument("agent observation and action dimensions must be positive");
    }
    if (a.kind == ActionKind::discrete && a.action_dim < 2) {
      throw std::invalid_argument("discrete agents need at least two actions");
    }
    obs_offsets_.push_back(obs_offsets_.back() + a.obs_dim);
    act_offsets_.push_back(act_offsets_.back() + a.action_dim);
  }
}

bool JointSpace::any_discrete() const {
  return std::any_of(agents_.begin(), agents_.end(),
                     [](const AgentSpace& a) { return a.kind == ActionKind::discrete; });
}

nlohmann::json to_json(const JointSpace& space) {
  nlohmann::json agents = nlohmann::json::array();
  for (const AgentSpace& a : space.agents()) {
    agents.push_back({{"obs_dim", a.obs_dim},
                      {"kind", a.kind == ActionKind::discrete ? "discrete" : "continuous"},
                      {"action_dim", a.action_dim}});
  }
  return {{"agents", agents}};
}

JointSpace joint_space_from_json(const nlohmann::json& j) {
  std::vector<AgentSpace> agents;
  for (const auto& a : j.at("agents")) {
    const std::string kind = a.at("kind").get<std::string>();
    if (kind != "discrete" && kind != "continuous") {
      throw std::invalid_argument("unknown action kind '" + kind + "'");
    }
    agents.push_back({a.at("obs_dim").get<std::size_t>(),
                      kind == "discrete" ? ActionKind::discrete : ActionKind::continuous,
                      a.at("action_dim").get<std::size_t>()});
  }
  return JointSpace(std::move(agents));
}

double EnvDescriptor::team_reward(std::span<const double> per_agent) const {
  if (per_agent.size() != space.agent_count()) {
    throw std::invalid_argument("team_reward: expected one reward per agent");
  }
  if (shared_reward) return per_agent[0];
  double total = 0.0;
  for (double r : per_agent) total += r;
  return total;
}

std::vector<double> encode_joint_action(const JointSpace& space,
                                        std::span<const AgentAction> actions) {
  if (actions.size() != space.agent_count()) {
    throw std::invalid_argument("expected actions for " + std::to_string(space.agent_count()) +
                                " agents, got " + std::to_string(actions.size()));
  }
  std::vector<double> row(space.joint_action_dim(), 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const AgentSpace& a = space.agent(i);
    const std::size_t off = space.action_offset(i);
    if (a.kind == ActionKind::discrete) {
      if (actions[i].size() != 1) throw std::invalid_argument("discrete action must be one index");
      const double idx = actions[i][0];
      if (idx < 0 || idx >= static_cast<double>(a.action_dim) || idx != std::floor(idx)) {
        throw std::invalid_argument("discrete action index out of range");
      }
      row[off + static_cast<std::size_t>(idx)] = 1.0;
    } else {
      if (actions[i].size() != a.action_dim) {
        throw std::invalid_argument("continuous action for agent " + std::to_string(i) +
                                    " has dimension " + std::to_string(actions[i].size()) +
                                    ", expected " + std::to_string(a.action_dim));
      }
      std::copy(actions[i].begin(), actions[i].end(), row.begin() + static_cast<std::ptrdiff_t>(off));
    }
  }
  return row;
}

std::size_t decode_discrete_block(std::span<const double> block, double temperature,
                                  const std::vector<bool>* legal, double uniform_draw) {
  if (legal && legal->size() != block.size()) {
    throw std::invalid_argument("legal-action mask width does not match the action block");
  }
  const auto allowed = [&](std::size_t k) { return !legal || (*legal)[k]; };
  std::size_t best = block.size();
  for (std::size_t k = 0; k < block.size(); ++k) {
    if (allowed(k) && (best == block.size() || block[k] > block[best])) best = k;
  }
  if (best == block.size()) throw std::invalid_argument("every action is masked illegal");
  if (temperature <= 0.0) return best;

  std::vector<double> w(block.size(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < block.size(); ++k) {
    if (!allowed(k)) continue;
    w[k] = std::exp((block[k] - block[best]) / temperature);
    total += w[k];
  }
  double u = uniform_draw * total;
  std::size_t last = best;
  for (std::size_t k = 0; k < block.size(); ++k) {
    if (w[k] == 0.0) continue;
    last = k;
    if (u < w[k]) return k;
    u -= w[k];
  }
  return last;
}

}  // namespace macflow
