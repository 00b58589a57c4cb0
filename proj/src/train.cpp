#include "macflow/train.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "macflow/checkpoint.hpp"
#include "macflow/envs.hpp"
#include "macflow/kernels.hpp"

namespace macflow {

OfflineDataset make_dataset(const ExperimentConfig& config) {
  if (!config.dataset.empty()) return load_dataset(config.dataset);
  Rng rng(config.data_seed);
  if (config.env == "landmark") {
    LandmarkConfig lc;
    lc.agents = config.agents;
    return gen_landmark_dataset(lc, config.episodes, rng);
  }
  if (config.env == "pure_coordination") {
    return gen_pure_coordination_dataset(config.samples, config.epsilon_rare, rng);
  }
  if (config.env == "payoff_zeta") return gen_payoff_dataset(config.zeta, config.samples, rng);
  if (config.env == "xor") return gen_xor_dataset(config.samples, config.mode_std, rng);
  throw std::invalid_argument("unknown env '" + config.env + "'");
}

TrainingState init_training(const ExperimentConfig& config, const JointSpace& space) {
  Rng rng = Rng(config.seed).split(1);
  TrainingState s;
  s.flow = JointFlowPolicy::init(space, config.flow_hidden, config.flow_steps, rng,
                                 config.policy_layer_norm);
  s.critics = CriticEnsemble::init(space, config.critic_config(), rng);
  s.actors = OneStepPolicySet::init(space, config.actor_hidden, rng, config.policy_layer_norm);
  s.flow_opt = AdamState::init(s.flow.velocity(), config.policy_adam());
  s.critic_opt = CriticOptimizer::init(s.critics, config.value_adam());
  s.actor_opt = ActorOptimizer::init(s.actors, config.policy_adam());
  return s;
}

StepLosses train_step(TrainingState& state, const TransitionBatch& batch,
                      const ExperimentConfig& config, Rng& flow_rng, Rng& critic_rng,
                      Rng& actor_rng) {
  StepLosses out;
  out.flow_bc = flow_update(state.flow, state.flow_opt, batch.obs, batch.act, flow_rng);
  {
    Tensor next = sample_joint_action(state.flow, batch.next_obs, critic_rng).action;
    if (state.flow.space().any_discrete()) next = snap_discrete(next, state.flow.space());
    const CriticUpdate u = critic_update(state.critics, state.critic_opt, batch, next);
    out.critic = u.loss;
    out.mean_q = u.mean_q;
  }
  out.actor = actor_update(state.actors, state.actor_opt, state.flow, state.critics, batch.obs,
                           actor_rng, config.actor_config());
  for (double v : {out.flow_bc, out.critic, out.mean_q, out.actor.total_actor_loss}) {
    if (!std::isfinite(v)) throw TrainingAborted("non-finite loss");
  }
  return out;
}

Tensor probe_observations(const TransitionBuffer& buffer, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (std::size_t k = 0; k < count; ++k) rows[k] = (k * buffer.size()) / count;
  return select_rows(buffer.all().obs, rows);
}

namespace {

// Scalar per agent: first action component, or the argmax index.
std::vector<std::vector<double>> agent_scalars(const Tensor& joint_actions, const JointSpace& space) {
  std::vector<std::vector<double>> cols(space.agent_count(), std::vector<double>(joint_actions.rows()));
  for (std::size_t r = 0; r < joint_actions.rows(); ++r) {
    const auto row = joint_actions.row_span(r);
    for (std::size_t i = 0; i < space.agent_count(); ++i) {
      const AgentSpace& a = space.agent(i);
      const auto block = row.subspan(space.action_offset(i), a.action_dim);
      cols[i][r] = a.kind == ActionKind::discrete
                       ? static_cast<double>(decode_discrete_block(block, 0.0, nullptr, 0.0))
                       : block[0];
    }
  }
  return cols;
}

}  // namespace

double inter_agent_mi(const Tensor& joint_actions, const JointSpace& space, std::size_t bins) {
  if (space.agent_count() < 2) return 0.0;
  const auto cols = agent_scalars(joint_actions, space);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    for (std::size_t j = i + 1; j < cols.size(); ++j) {
      const bool discrete = space.agent(i).kind == ActionKind::discrete &&
                            space.agent(j).kind == ActionKind::discrete;
      total += mutual_information(cols[i], cols[j], bins, discrete);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

double inter_agent_mi(const std::function<Tensor(const Tensor& obs, Rng& rng)>& sampler,
                      const Tensor& probe_obs, const JointSpace& space, std::size_t samples,
                      std::size_t bins, Rng& rng) {
  double total = 0.0;
  for (std::size_t o = 0; o < probe_obs.rows(); ++o) {
    const std::vector<std::size_t> rep(samples, o);
    total += inter_agent_mi(sampler(select_rows(probe_obs, rep), rng), space, bins);
  }
  return total / static_cast<double>(probe_obs.rows());
}

namespace {

Tensor obs_row(const std::vector<AgentObs>& obs, const JointSpace& space) {
  Tensor row(1, space.joint_obs_dim());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    std::copy(obs[i].begin(), obs[i].end(), row.row_span(0).begin() + space.obs_offset(i));
  }
  return row;
}

}  // namespace

JointActor joint_flow_actor(const JointFlowPolicy& flow, double temperature) {
  return [flow, temperature](const std::vector<AgentObs>& obs, Rng& rng) {
    const Tensor a = sample_joint_action(flow, obs_row(obs, flow.space()), rng).action;
    return joint_row_to_actions(a, 0, flow.space(), temperature, rng);
  };
}

JointActor one_step_actor(const OneStepPolicySet& set, double temperature) {
  return [set, temperature](const std::vector<AgentObs>& obs, Rng& rng) {
    std::vector<AgentAction> out;
    for (std::size_t i = 0; i < set.agent_count(); ++i) {
      out.push_back(one_step_act(set, i, obs[i], rng, nullptr, temperature));
    }
    return out;
  };
}

std::vector<NamedNetwork> checkpoint_networks(const TrainingState& state) {
  std::vector<NamedNetwork> nets{{"flow", state.flow.velocity()}};
  for (std::size_t k = 0; k < state.critics.critic_count(); ++k) {
    const TwinCritic& c = state.critics.critic(k);
    const std::string p = "critic" + std::to_string(k);
    nets.push_back({p + ".q1", c.q1});
    nets.push_back({p + ".q2", c.q2});
    nets.push_back({p + ".target1", c.target1});
    nets.push_back({p + ".target2", c.target2});
  }
  for (std::size_t i = 0; i < state.actors.agent_count(); ++i) {
    nets.push_back({"actor" + std::to_string(i), state.actors.net(i)});
  }
  return nets;
}

void save_training_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
  save_checkpoint(path, checkpoint_networks(state));
}

void load_training_checkpoint(TrainingState& state, const std::filesystem::path& path) {
  const std::vector<NamedNetwork> nets = load_checkpoint(path);
  const auto take = [&](const std::string& name, const MlpParams& like) {
    const MlpParams& p = find_network(nets, name);
    if (!p.same_structure(like)) throw std::invalid_argument("checkpoint network '" + name + "' has a different shape");
    return p;
  };
  state.flow = state.flow.with_velocity(take("flow", state.flow.velocity()));
  for (std::size_t k = 0; k < state.critics.critic_count(); ++k) {
    TwinCritic& c = state.critics.critic(k);
    const std::string p = "critic" + std::to_string(k);
    c.q1 = take(p + ".q1", c.q1);
    c.q2 = take(p + ".q2", c.q2);
    c.target1 = take(p + ".target1", c.target1);
    c.target2 = take(p + ".target2", c.target2);
  }
  for (std::size_t i = 0; i < state.actors.agent_count(); ++i) {
    state.actors.net(i) = take("actor" + std::to_string(i), state.actors.net(i));
  }
}

namespace {

CheckpointEval evaluate_checkpoint(const TrainingState& state, const ExperimentConfig& config,
                                   const Tensor& probe, const EnvDescriptor& env, std::size_t step) {
  Rng rng = Rng(config.seed).split(1000 + step);
  CheckpointEval e;
  e.step = step;
  e.bounds = check_bounds(state.actors, state.flow, state.critics, probe, config.bound_samples,
                          config.lipschitz_pairs, config.bound_tol, rng);
  const JointSpace& space = state.flow.space();
  const JointFlowPolicy& flow = state.flow;
  const OneStepPolicySet& actors = state.actors;
  e.mi_joint = inter_agent_mi(
      [&](const Tensor& obs, Rng& r) { return sample_joint_action(flow, obs, r).action; }, probe,
      space, config.mi_samples, config.mi_bins, rng);
  e.mi_factored = inter_agent_mi(
      [&](const Tensor& obs, Rng& r) {
        return one_step_forward(actors, obs, r.normal_tensor(obs.rows(), space.joint_action_dim()));
      },
      probe, space, config.mi_samples, config.mi_bins, rng);
  if (config.eval_episodes > 0) {
    const auto environment = make_environment(env);
    Rng r1 = rng.split(1), r2 = rng.split(2);
    e.return_joint = evaluate_return(joint_flow_actor(flow), *environment, config.eval_episodes, r1);
    e.return_factored =
        evaluate_return(one_step_actor(actors), *environment, config.eval_episodes, r2);
  }
  return e;
}

void log_eval(MetricsWriter& m, BoundsWriter& b, const CheckpointEval& e, const ExperimentConfig& c) {
  const BoundCheck& bc = e.bounds;
  m.write(e.step, "w2_exact", bc.prop1.w2_exact, "n=" + std::to_string(c.bound_samples));
  m.write(e.step, "coupling_rms", bc.prop1.coupling_rms, "n=" + std::to_string(c.bound_samples));
  m.write(e.step, "L_hat", bc.prop2.lipschitz, "pairs=" + std::to_string(c.lipschitz_pairs));
  m.write(e.step, "value_gap", bc.prop2.value_gap, "n=" + std::to_string(c.bound_samples));
  m.write(e.step, "gap_bound", bc.prop2.bound, "");
  m.write(e.step, "mi_joint", e.mi_joint,
          "bins=" + std::to_string(c.mi_bins) + ";n=" + std::to_string(c.mi_samples));
  m.write(e.step, "mi_factored", e.mi_factored,
          "bins=" + std::to_string(c.mi_bins) + ";n=" + std::to_string(c.mi_samples));
  if (e.return_joint) m.write(e.step, "return_joint", *e.return_joint, "episodes=" + std::to_string(c.eval_episodes));
  if (e.return_factored) m.write(e.step, "return_factored", *e.return_factored, "episodes=" + std::to_string(c.eval_episodes));
  b.write({e.step, bc.distill_loss, bc.prop1.w2_exact, bc.prop1.coupling_rms, bc.prop2.lipschitz,
           bc.prop2.value_gap, bc.prop2.bound, bc.prop1.holds && bc.prop2.holds});
  m.flush();
  b.flush();
}

std::string checkpoint_name(std::size_t step) {
  std::ostringstream s;
  s << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
  return s.str();
}

}  // namespace

TrainResult train(const ExperimentConfig& config) { return train(config, make_dataset(config)); }

TrainResult train(const ExperimentConfig& config, const OfflineDataset& dataset) {
  config.validate();
  kernels::set_single_thread(config.single_thread);
  const TransitionBuffer buffer(dataset);

  TrainResult res;
  res.dir = config.output_dir;
  std::filesystem::create_directories(res.dir);
  if (config.write_checkpoints) std::filesystem::create_directories(res.dir / "checkpoints");
  save_config(config, res.dir / "config.json");
  MetricsWriter metrics(res.dir / "metrics.csv");
  BoundsWriter bounds(res.dir / "bounds.csv");

  res.state = init_training(config, buffer.space());
  res.probe_obs = probe_observations(buffer, config.probe_obs);
  const Rng root(config.seed);
  Rng batch_rng = root.split(2), flow_rng = root.split(3), critic_rng = root.split(4),
      actor_rng = root.split(5);
  const std::size_t interval = config.resolved_eval_interval();

  const auto checkpoint = [&](std::size_t step) {
    res.evals.push_back(evaluate_checkpoint(res.state, config, res.probe_obs, dataset.env, step));
    log_eval(metrics, bounds, res.evals.back(), config);
    if (config.write_checkpoints) {
      save_training_checkpoint(res.state, res.dir / "checkpoints" / checkpoint_name(step));
    }
  };

  checkpoint(0);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    StepLosses l;
    try {
      const TransitionBatch batch = buffer.sample(config.batch_size, batch_rng);
      TrainingState next = res.state;
      l = train_step(next, batch, config, flow_rng, critic_rng, actor_rng);
      res.state = std::move(next);
    } catch (const std::runtime_error& e) {
      res.aborted = "step " + std::to_string(step) + ": " + e.what();
      break;
    }
    res.losses.push_back(l);
    metrics.write(step, "flow_bc_loss", l.flow_bc);
    metrics.write(step, "critic_loss", l.critic);
    metrics.write(step, "mean_q", l.mean_q);
    metrics.write(step, "distill_loss", l.actor.distill_loss);
    metrics.write(step, "q_term", l.actor.q_term);
    metrics.write(step, "actor_loss", l.actor.total_actor_loss);
    if (step % interval == 0 || step == config.steps) checkpoint(step);
  }
  metrics.flush();
  return res;
}

}  // namespace macflow
