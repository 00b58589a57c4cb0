#include "macflow/config.hpp"

#include <fstream>
#include <stdexcept>

namespace macflow {

using nlohmann::json;

std::size_t ExperimentConfig::resolved_eval_interval() const {
  if (eval_interval > 0) return eval_interval;
  return std::max<std::size_t>(1, steps / 50);
}

CriticConfig ExperimentConfig::critic_config() const {
  return {critic_hidden, gamma, tau, twin_reduction_from_string(twin_reduction), centralized_critic};
}

ActorConfig ExperimentConfig::actor_config() const {
  return {alpha, q_guidance, normalize_q, discrete_guidance_from_string(discrete_guidance)};
}

AdamConfig ExperimentConfig::policy_adam() const { return {policy_lr, 0.9, 0.999, adam_eps}; }
AdamConfig ExperimentConfig::value_adam() const { return {value_lr, 0.9, 0.999, adam_eps}; }

void ExperimentConfig::validate() const {
  const auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + what);
  };
  need(env == "landmark" || env == "pure_coordination" || env == "payoff_zeta" || env == "xor",
       "unknown env '" + env + "'");
  need(steps >= 1, "steps must be >= 1");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(flow_steps >= 1, "flow_steps must be >= 1");
  need(alpha >= 0.0, "alpha must be >= 0");
  need(gamma >= 0.0 && gamma <= 1.0, "gamma must lie in [0, 1]");
  need(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
  need(policy_lr >= 0.0 && value_lr >= 0.0, "learning rates must be >= 0");
  need(adam_eps > 0.0, "adam_eps must be positive");
  need(agents >= 1 && episodes >= 1 && samples >= 1, "dataset sizes must be >= 1");
  need(zeta >= 0.0 && zeta <= 1.0, "zeta must lie in [0, 1]");
  need(epsilon_rare > 0.0 && epsilon_rare < 0.5, "epsilon_rare must lie in (0, 0.5)");
  need(mode_std > 0.0, "mode_std must be positive");
  need(probe_obs >= 1, "probe_obs must be >= 1");
  need(bound_samples >= 1 && bound_samples <= kMaxExactSamples, "bound_samples must lie in [1, 512]");
  need(lipschitz_pairs >= 1, "lipschitz_pairs must be >= 1");
  need(mi_samples >= 100, "mi_samples must be >= 100");
  need(mi_bins >= 2, "mi_bins must be >= 2");
  need(bound_tol >= 0.0, "bound_tol must be >= 0");
  twin_reduction_from_string(twin_reduction);
  discrete_guidance_from_string(discrete_guidance);
}

json to_json(const ExperimentConfig& c) {
  return {{"env", c.env},
          {"dataset", c.dataset},
          {"seed", c.seed},
          {"data_seed", c.data_seed},
          {"agents", c.agents},
          {"episodes", c.episodes},
          {"samples", c.samples},
          {"zeta", c.zeta},
          {"epsilon_rare", c.epsilon_rare},
          {"mode_std", c.mode_std},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"flow_steps", c.flow_steps},
          {"alpha", c.alpha},
          {"gamma", c.gamma},
          {"tau", c.tau},
          {"policy_lr", c.policy_lr},
          {"value_lr", c.value_lr},
          {"adam_eps", c.adam_eps},
          {"flow_hidden", c.flow_hidden},
          {"actor_hidden", c.actor_hidden},
          {"critic_hidden", c.critic_hidden},
          {"policy_layer_norm", c.policy_layer_norm},
          {"q_guidance", c.q_guidance},
          {"normalize_q", c.normalize_q},
          {"discrete_guidance", c.discrete_guidance},
          {"twin_reduction", c.twin_reduction},
          {"centralized_critic", c.centralized_critic},
          {"eval_interval", c.eval_interval},
          {"probe_obs", c.probe_obs},
          {"bound_samples", c.bound_samples},
          {"lipschitz_pairs", c.lipschitz_pairs},
          {"bound_tol", c.bound_tol},
          {"mi_samples", c.mi_samples},
          {"mi_bins", c.mi_bins},
          {"eval_episodes", c.eval_episodes},
          {"write_checkpoints", c.write_checkpoints},
          {"single_thread", c.single_thread},
          {"output_dir", c.output_dir}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  const json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        j.at(key).get_to(field);
      } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: bad value for '") + key + "': " + e.what());
      }
    }
  };
  get("env", c.env);
  get("dataset", c.dataset);
  get("seed", c.seed);
  c.data_seed = c.seed;
  get("data_seed", c.data_seed);
  get("agents", c.agents);
  get("episodes", c.episodes);
  get("samples", c.samples);
  get("zeta", c.zeta);
  get("epsilon_rare", c.epsilon_rare);
  get("mode_std", c.mode_std);
  get("steps", c.steps);
  get("batch_size", c.batch_size);
  get("flow_steps", c.flow_steps);
  get("alpha", c.alpha);
  get("gamma", c.gamma);
  get("tau", c.tau);
  get("policy_lr", c.policy_lr);
  get("value_lr", c.value_lr);
  get("adam_eps", c.adam_eps);
  get("flow_hidden", c.flow_hidden);
  get("actor_hidden", c.actor_hidden);
  get("critic_hidden", c.critic_hidden);
  get("policy_layer_norm", c.policy_layer_norm);
  get("q_guidance", c.q_guidance);
  get("normalize_q", c.normalize_q);
  get("discrete_guidance", c.discrete_guidance);
  get("twin_reduction", c.twin_reduction);
  get("centralized_critic", c.centralized_critic);
  get("eval_interval", c.eval_interval);
  get("probe_obs", c.probe_obs);
  get("bound_samples", c.bound_samples);
  get("lipschitz_pairs", c.lipschitz_pairs);
  get("bound_tol", c.bound_tol);
  get("mi_samples", c.mi_samples);
  get("mi_bins", c.mi_bins);
  get("eval_episodes", c.eval_episodes);
  get("write_checkpoints", c.write_checkpoints);
  get("single_thread", c.single_thread);
  get("output_dir", c.output_dir);
  c.validate();
  return c;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  j[key] = value;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(c).dump(2) << '\n';
}

}  // namespace macflow
