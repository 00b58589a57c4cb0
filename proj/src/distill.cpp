#include "macflow/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "macflow/metrics.hpp"

namespace macflow {

std::string to_string(DiscreteGuidance g) {
  return g == DiscreteGuidance::expected_q ? "expected_q" : "straight_through";
}

DiscreteGuidance discrete_guidance_from_string(const std::string& s) {
  if (s == "expected_q") return DiscreteGuidance::expected_q;
  if (s == "straight_through") return DiscreteGuidance::straight_through;
  throw std::invalid_argument("unknown discrete guidance '" + s + "'");
}

OneStepPolicySet::OneStepPolicySet(JointSpace space, std::vector<MlpParams> nets)
    : space_(std::move(space)), nets_(std::move(nets)) {
  if (nets_.size() != space_.agent_count()) {
    throw std::invalid_argument("one-step policy set needs one net per agent");
  }
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    const AgentSpace& a = space_.agent(i);
    nets_[i].validate();
    if (nets_[i].input_dim() != a.obs_dim + a.action_dim || nets_[i].output_dim() != a.action_dim) {
      throw std::invalid_argument("one-step net " + std::to_string(i) + " must map " +
                                  std::to_string(a.obs_dim + a.action_dim) + " -> " +
                                  std::to_string(a.action_dim));
    }
  }
}

MlpArchitecture OneStepPolicySet::architecture(const AgentSpace& agent,
                                               std::vector<std::size_t> hidden, bool layer_norm) {
  return {agent.obs_dim + agent.action_dim, std::move(hidden), agent.action_dim, layer_norm,
          Activation::gelu};
}

OneStepPolicySet OneStepPolicySet::init(const JointSpace& space, std::vector<std::size_t> hidden,
                                        Rng& rng, bool layer_norm) {
  std::vector<MlpParams> nets;
  for (const AgentSpace& a : space.agents()) {
    nets.push_back(MlpParams::init(architecture(a, hidden, layer_norm), rng));
  }
  return {space, std::move(nets)};
}

namespace {

Tensor agent_input(const JointSpace& space, std::size_t i, const Tensor& joint_obs,
                   const Tensor& joint_noise) {
  const Tensor o = slice_columns(joint_obs, space.obs_offset(i), space.agent(i).obs_dim);
  const Tensor z = slice_columns(joint_noise, space.action_offset(i), space.agent(i).action_dim);
  const Tensor* parts[] = {&o, &z};
  return concat_columns(parts);
}

void check_joint(const JointSpace& space, const Tensor& joint_obs, const Tensor& joint_noise) {
  if (joint_obs.cols() != space.joint_obs_dim() || joint_noise.cols() != space.joint_action_dim() ||
      joint_obs.rows() != joint_noise.rows()) {
    throw std::invalid_argument("one-step policies: observation/noise shapes " +
                                joint_obs.shape_string() + " and " + joint_noise.shape_string() +
                                " do not match the joint space");
  }
}

}  // namespace

Tensor one_step_forward(const OneStepPolicySet& set, const Tensor& joint_obs,
                        const Tensor& joint_noise, NfeCounter* nfe) {
  const JointSpace& space = set.space();
  check_joint(space, joint_obs, joint_noise);
  Tensor out(joint_obs.rows(), space.joint_action_dim());
  for (std::size_t i = 0; i < set.agent_count(); ++i) {
    const Tensor y = mlp_forward(set.net(i), agent_input(space, i, joint_obs, joint_noise));
    if (nfe) ++nfe->count;
    const std::size_t off = space.action_offset(i);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      std::copy(y.row_span(r).begin(), y.row_span(r).end(), out.row_span(r).begin() + off);
    }
  }
  return out;
}

std::vector<BoundMlp> bind_policies(Tape& tape, const OneStepPolicySet& set, bool trainable) {
  std::vector<BoundMlp> out;
  for (std::size_t i = 0; i < set.agent_count(); ++i) out.push_back(bind(tape, set.net(i), trainable));
  return out;
}

Var one_step_apply(const std::vector<BoundMlp>& nets, const OneStepPolicySet& set,
                   const Tensor& joint_obs, const Tensor& joint_noise) {
  const JointSpace& space = set.space();
  check_joint(space, joint_obs, joint_noise);
  Tape& tape = nets.front().tensors.front().tape();
  std::vector<Var> parts;
  for (std::size_t i = 0; i < set.agent_count(); ++i) {
    parts.push_back(mlp_apply(nets[i], tape.constant(agent_input(space, i, joint_obs, joint_noise))));
  }
  return parts.size() == 1 ? parts.front() : ad::concat_columns(parts);
}

Var distill_loss(Var one_step_out, const Tensor& flow_target) {
  if (!one_step_out.value().same_shape(flow_target)) {
    throw std::invalid_argument("distill_loss: output shape " + one_step_out.value().shape_string() +
                                " vs target " + flow_target.shape_string());
  }
  const Var diff = ad::sub(one_step_out, one_step_out.tape().constant(flow_target));
  return ad::scale(ad::sum(ad::square(diff)), 1.0 / static_cast<double>(flow_target.rows()));
}

double distill_loss(const OneStepPolicySet& set, const JointFlowPolicy& flow, const Tensor& joint_obs,
                    Rng& rng) {
  const JointSample s = sample_joint_action(flow, joint_obs, rng);
  const double rms = coupling_rms(one_step_forward(set, joint_obs, s.noise), s.action);
  return rms * rms;
}

namespace {

// Critic input for the block of agents a critic reads, built from the raw
// one-step outputs. Discrete blocks pass through a straight-through one-hot.
Var critic_action(Var out, const JointSpace& space, const CriticView& view) {
  Tape& tape = out.tape();
  std::vector<Var> blocks;
  for (std::size_t i : view.agents) {
    const AgentSpace& a = space.agent(i);
    const Var block = ad::slice_columns(out, space.action_offset(i), a.action_dim);
    if (a.kind == ActionKind::continuous) {
      blocks.push_back(block);
      continue;
    }
    const Var p = ad::softmax_rows(block);
    Tensor hard(block.value().rows(), a.action_dim);
    for (std::size_t r = 0; r < hard.rows(); ++r) {
      hard(r, decode_discrete_block(block.value().row_span(r), 0.0, nullptr, 0.0)) = 1.0;
    }
    blocks.push_back(ad::add(tape.constant(std::move(hard)), ad::sub(p, ad::stop_gradient(p))));
  }
  return blocks.size() == 1 ? blocks.front() : ad::concat_columns(blocks);
}

Var critic_term(const BoundCritics& bound, const CriticEnsemble& critics, std::size_t k,
                const Tensor& joint_obs, Var out, DiscreteGuidance guidance) {
  const JointSpace& space = critics.space();
  const CriticView& view = critics.view(k);
  const Tensor obs = critics.critic_obs(k, joint_obs);
  const bool single_discrete =
      view.agents.size() == 1 && space.agent(view.agents[0]).kind == ActionKind::discrete;
  if (guidance == DiscreteGuidance::expected_q && single_discrete) {
    // sum_c softmax(logits)_c Q_k(o, onehot(c)); the Q table is a constant.
    const std::size_t i = view.agents[0];
    const std::size_t n_act = space.agent(i).action_dim;
    Tensor table(joint_obs.rows(), n_act);
    for (std::size_t c = 0; c < n_act; ++c) {
      Tensor onehot(joint_obs.rows(), n_act);
      for (std::size_t r = 0; r < onehot.rows(); ++r) onehot(r, c) = 1.0;
      const Tensor q = q_value(critics, k, obs, onehot);
      for (std::size_t r = 0; r < table.rows(); ++r) table(r, c) = q[r];
    }
    const Var p = ad::softmax_rows(ad::slice_columns(out, space.action_offset(i), n_act));
    return ad::row_sum(ad::mul(p, out.tape().constant(std::move(table))));
  }
  if (guidance == DiscreteGuidance::expected_q && view.agents.size() > 1 && space.any_discrete()) {
    throw std::invalid_argument("expected-Q guidance needs per-agent critics; use straight_through");
  }
  return q_value(bound, critics, k, obs, critic_action(out, space, view));
}

}  // namespace

ActorTerms actor_loss(const std::vector<BoundMlp>& nets, const OneStepPolicySet& set,
                      const CriticEnsemble& critics, const Tensor& joint_obs,
                      const Tensor& joint_noise, const Tensor& flow_target,
                      const ActorConfig& config) {
  if (!(config.alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  Tape& tape = nets.front().tensors.front().tape();
  const Var out = one_step_apply(nets, set, joint_obs, joint_noise);
  const Var distill = distill_loss(out, flow_target);

  ActorTerms t;
  t.values.distill_loss = distill.value().item();
  if (!config.q_guidance) {
    t.total = ad::scale(distill, config.alpha);
    t.values.total_actor_loss = t.total.value().item();
    return t;
  }

  const BoundCritics bound = bind_critics(tape, critics, false);
  Var qsum;
  for (std::size_t k = 0; k < critics.critic_count(); ++k) {
    const Var q = critic_term(bound, critics, k, joint_obs, out, config.discrete);
    qsum = k == 0 ? q : ad::add(qsum, q);
  }
  const Var qtot = ad::scale(qsum, 1.0 / static_cast<double>(critics.critic_count()));
  double denom = 1.0;
  if (config.normalize_q) {
    double m = 0.0;
    for (double v : qtot.value().values()) m += std::abs(v);
    m /= static_cast<double>(qtot.value().size());
    if (m > 1e-8) denom = m;
  }
  const Var q_term = ad::scale(ad::mean(qtot), 1.0 / denom);
  t.values.q_term = q_term.value().item();
  t.total = ad::add(ad::scale(q_term, -1.0), ad::scale(distill, config.alpha));
  t.values.total_actor_loss = t.total.value().item();
  return t;
}

DistillBatchResult actor_loss(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                              const CriticEnsemble& critics, const Tensor& joint_obs, Rng& rng,
                              const ActorConfig& config) {
  const JointSample s = sample_joint_action(flow, joint_obs, rng);
  Tape tape;
  return actor_loss(bind_policies(tape, set, false), set, critics, joint_obs, s.noise, s.action,
                    config)
      .values;
}

ActorOptimizer ActorOptimizer::init(const OneStepPolicySet& set, AdamConfig config) {
  ActorOptimizer o;
  for (std::size_t i = 0; i < set.agent_count(); ++i) o.nets.push_back(AdamState::init(set.net(i), config));
  return o;
}

DistillBatchResult actor_update(OneStepPolicySet& set, ActorOptimizer& opt,
                                const JointFlowPolicy& flow, const CriticEnsemble& critics,
                                const Tensor& joint_obs, Rng& rng, const ActorConfig& config) {
  const JointSample s = sample_joint_action(flow, joint_obs, rng);
  Tape tape;
  const std::vector<BoundMlp> nets = bind_policies(tape, set, true);
  const ActorTerms terms = actor_loss(nets, set, critics, joint_obs, s.noise, s.action, config);
  tape.backward(terms.total);
  for (std::size_t i = 0; i < set.agent_count(); ++i) {
    AdamResult r = adam_step(set.net(i), gradient_of(tape, nets[i]), opt.nets[i]);
    set.net(i) = std::move(r.params);
    opt.nets[i] = std::move(r.state);
  }
  return terms.values;
}

AgentAction one_step_act(const OneStepPolicySet& set, std::size_t agent, std::span<const double> obs,
                         Rng& rng, NfeCounter* nfe, double temperature) {
  const AgentSpace& a = set.space().agent(agent);
  if (obs.size() != a.obs_dim) {
    throw std::invalid_argument("one_step_act: agent " + std::to_string(agent) + " expects " +
                                std::to_string(a.obs_dim) + " observation features, got " +
                                std::to_string(obs.size()));
  }
  Tensor in(1, a.obs_dim + a.action_dim);
  std::copy(obs.begin(), obs.end(), in.row_span(0).begin());
  for (std::size_t d = 0; d < a.action_dim; ++d) in(0, a.obs_dim + d) = rng.normal();
  const Tensor y = mlp_forward(set.net(agent), in);
  if (nfe) ++nfe->count;
  if (a.kind == ActionKind::continuous) return AgentAction(y.values().begin(), y.values().end());
  const double u = temperature > 0.0 ? rng.uniform() : 0.0;
  return {static_cast<double>(decode_discrete_block(y.row_span(0), temperature, nullptr, u))};
}

// ---- bound checks -----------------------------------------------------------

namespace {

BoundCheck run_checks(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                      const CriticEnsemble* critics, const Tensor& obs_set, std::size_t samples,
                      std::size_t pair_count, double tol, Rng& rng) {
  if (samples == 0 || samples > kMaxExactSamples) {
    throw std::invalid_argument("bound checks need 1.." + std::to_string(kMaxExactSamples) +
                                " samples, got " + std::to_string(samples));
  }
  if (obs_set.rows() == 0) throw std::invalid_argument("bound checks need at least one observation");
  const std::size_t dim = flow.action_dim();
  const std::size_t n_obs = obs_set.rows();
  const std::size_t pairs_per_obs = std::max<std::size_t>(samples, pair_count / n_obs);

  BoundCheck out;
  double sq_sum = 0.0, w2_sum = 0.0, gap_sum = 0.0, lip = -1.0;
  for (std::size_t o = 0; o < n_obs; ++o) {
    const std::vector<std::size_t> rep(samples, o);
    const Tensor obs = select_rows(obs_set, rep);
    const Tensor flow_ind = euler_sample(flow, obs, rng.normal_tensor(samples, dim));
    const Tensor step_ind = one_step_forward(set, obs, rng.normal_tensor(samples, dim));
    w2_sum += w2_exact(flow_ind, step_ind);

    const Tensor z = rng.normal_tensor(samples, dim);
    const Tensor flow_sh = euler_sample(flow, obs, z);
    const Tensor step_sh = one_step_forward(set, obs, z);
    const double rms = coupling_rms(flow_sh, step_sh);
    sq_sum += rms * rms * static_cast<double>(samples);

    if (!critics) continue;
    const Tensor qf = q_tot(*critics, obs, flow_sh);
    const Tensor qs = q_tot(*critics, obs, step_sh);
    double mf = 0.0, ms = 0.0;
    for (std::size_t r = 0; r < samples; ++r) mf += qf[r], ms += qs[r];
    gap_sum += std::abs(ms - mf) / static_cast<double>(samples);

    lip = std::max(lip, max_lipschitz_ratio(*critics, obs, step_sh, flow_sh));
    const std::size_t extra = pairs_per_obs - samples;
    if (extra == 0) continue;
    // Cross pairs index a pool whose Q values are computed once.
    const Tensor* pool_parts[] = {&flow_ind, &step_ind, &flow_sh, &step_sh};
    Tensor pool(4 * samples, dim);
    for (std::size_t p = 0; p < 4; ++p) {
      for (std::size_t r = 0; r < samples; ++r) {
        const auto src = pool_parts[p]->row_span(r);
        std::copy(src.begin(), src.end(), pool.row_span(p * samples + r).begin());
      }
    }
    const Tensor q_pool = q_tot(*critics, select_rows(obs_set, std::vector<std::size_t>(4 * samples, o)), pool);
    for (std::size_t e = 0; e < extra; ++e) {
      const std::size_t ia = rng.index(pool.rows());
      const std::size_t iy = rng.index(pool.rows());
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = pool(ia, c) - pool(iy, c);
        d2 += d * d;
      }
      const double dist = std::sqrt(d2);
      if (dist < 1e-9) continue;
      lip = std::max(lip, std::abs(q_pool[ia] - q_pool[iy]) / dist);
    }
  }

  const double n_total = static_cast<double>(n_obs * samples);
  out.distill_loss = sq_sum / n_total;
  out.prop1.coupling_rms = std::sqrt(out.distill_loss);
  out.prop1.w2_exact = w2_sum / static_cast<double>(n_obs);
  out.prop1.holds = out.prop1.w2_exact <= out.prop1.coupling_rms * (1.0 + tol);
  if (critics) {
    out.prop2.value_gap = gap_sum / static_cast<double>(n_obs);
    out.prop2.lipschitz = std::max(lip, 0.0);
    out.prop2.bound = out.prop2.lipschitz * out.prop1.coupling_rms;
    out.prop2.holds = out.prop2.value_gap <= out.prop2.bound * (1.0 + tol);
  }
  return out;
}

}  // namespace

BoundCheck check_bounds(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                        const CriticEnsemble& critics, const Tensor& obs_set, std::size_t samples,
                        std::size_t pair_count, double tol, Rng& rng) {
  return run_checks(set, flow, &critics, obs_set, samples, pair_count, tol, rng);
}

Prop1Result verify_prop1(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                         const Tensor& obs_set, std::size_t samples, double tol, Rng& rng) {
  return run_checks(set, flow, nullptr, obs_set, samples, 0, tol, rng).prop1;
}

Prop2Result verify_prop2(const OneStepPolicySet& set, const JointFlowPolicy& flow,
                         const CriticEnsemble& critics, const Tensor& obs_set, std::size_t samples,
                         std::size_t pair_count, double tol, Rng& rng) {
  return run_checks(set, flow, &critics, obs_set, samples, pair_count, tol, rng).prop2;
}

}  // namespace macflow
