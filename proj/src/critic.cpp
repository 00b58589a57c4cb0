#include "macflow/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace macflow {

std::string to_string(TwinReduction r) { return r == TwinReduction::mean ? "mean" : "min"; }

TwinReduction twin_reduction_from_string(const std::string& s) {
  if (s == "mean") return TwinReduction::mean;
  if (s == "min") return TwinReduction::min;
  throw std::invalid_argument("unknown twin reduction '" + s + "'");
}

double reduce_twins(double a, double b, TwinReduction r) {
  return r == TwinReduction::mean ? 0.5 * (a + b) : std::min(a, b);
}

std::vector<CriticView> critic_views(const JointSpace& space, bool centralized) {
  std::vector<CriticView> views;
  if (centralized) {
    CriticView v{0, space.joint_obs_dim(), 0, space.joint_action_dim(), {}};
    for (std::size_t i = 0; i < space.agent_count(); ++i) v.agents.push_back(i);
    views.push_back(std::move(v));
    return views;
  }
  for (std::size_t i = 0; i < space.agent_count(); ++i) {
    views.push_back({space.obs_offset(i), space.agent(i).obs_dim, space.action_offset(i),
                     space.agent(i).action_dim, {i}});
  }
  return views;
}

CriticEnsemble::CriticEnsemble(JointSpace space, CriticConfig config, std::vector<TwinCritic> critics)
    : space_(std::move(space)),
      config_(std::move(config)),
      views_(critic_views(space_, config_.centralized)),
      critics_(std::move(critics)) {
  if (critics_.size() != views_.size()) {
    throw std::invalid_argument("critic ensemble: expected " + std::to_string(views_.size()) +
                                " critics, got " + std::to_string(critics_.size()));
  }
  if (!(config_.gamma >= 0.0 && config_.gamma <= 1.0)) throw std::invalid_argument("gamma outside [0, 1]");
  if (!(config_.tau >= 0.0 && config_.tau <= 1.0)) throw std::invalid_argument("tau outside [0, 1]");
  for (std::size_t k = 0; k < critics_.size(); ++k) {
    const TwinCritic& c = critics_[k];
    const std::size_t in = views_[k].obs_dim + views_[k].act_dim;
    for (const MlpParams* p : {&c.q1, &c.q2, &c.target1, &c.target2}) {
      p->validate();
      if (p->input_dim() != in || p->output_dim() != 1 || !p->layer_norm()) {
        throw std::invalid_argument("critic nets must be layer-normed and map " +
                                    std::to_string(in) + " -> 1");
      }
    }
    if (!c.q1.same_structure(c.target1) || !c.q2.same_structure(c.target2)) {
      throw std::invalid_argument("critic target shapes differ from online shapes");
    }
  }
}

CriticEnsemble CriticEnsemble::init(const JointSpace& space, const CriticConfig& config, Rng& rng) {
  std::vector<TwinCritic> critics;
  for (const CriticView& v : critic_views(space, config.centralized)) {
    const MlpArchitecture arch{v.obs_dim + v.act_dim, config.hidden, 1, true, Activation::gelu};
    TwinCritic c;
    c.q1 = MlpParams::init(arch, rng);
    c.q2 = MlpParams::init(arch, rng);
    c.target1 = c.q1;
    c.target2 = c.q2;
    critics.push_back(std::move(c));
  }
  return {space, config, std::move(critics)};
}

Tensor CriticEnsemble::critic_obs(std::size_t k, const Tensor& joint_obs) const {
  const CriticView& v = view(k);
  return slice_columns(joint_obs, v.obs_offset, v.obs_dim);
}

Tensor CriticEnsemble::critic_act(std::size_t k, const Tensor& joint_act) const {
  const CriticView& v = view(k);
  return slice_columns(joint_act, v.act_offset, v.act_dim);
}

Tensor CriticEnsemble::critic_reward(std::size_t k, const Tensor& rewards) const {
  const CriticView& v = view(k);
  Tensor out(rewards.rows(), 1);
  for (std::size_t r = 0; r < rewards.rows(); ++r) {
    double s = 0.0;
    for (std::size_t i : v.agents) s += rewards(r, i);
    out(r, 0) = s / static_cast<double>(v.agents.size());
  }
  return out;
}

Tensor q_value(const CriticEnsemble& ens, std::size_t k, const Tensor& critic_obs,
               const Tensor& critic_act, bool target) {
  const TwinCritic& c = ens.critic(k);
  const Tensor* parts[] = {&critic_obs, &critic_act};
  const Tensor in = concat_columns(parts);
  const Tensor a = mlp_forward(target ? c.target1 : c.q1, in);
  const Tensor b = mlp_forward(target ? c.target2 : c.q2, in);
  Tensor out(in.rows(), 1);
  for (std::size_t r = 0; r < in.rows(); ++r) out[r] = reduce_twins(a[r], b[r], ens.config().reduction);
  return out;
}

Tensor q_tot(const CriticEnsemble& ens, const Tensor& joint_obs, const Tensor& joint_act,
             bool target) {
  Tensor total(joint_obs.rows(), 1);
  for (std::size_t k = 0; k < ens.critic_count(); ++k) {
    const Tensor q = q_value(ens, k, ens.critic_obs(k, joint_obs), ens.critic_act(k, joint_act), target);
    for (std::size_t r = 0; r < total.size(); ++r) total[r] += q[r];
  }
  const double n = static_cast<double>(ens.critic_count());
  for (std::size_t r = 0; r < total.size(); ++r) total[r] /= n;
  return total;
}

BoundCritics bind_critics(Tape& tape, const CriticEnsemble& ens, bool trainable) {
  BoundCritics b;
  for (std::size_t k = 0; k < ens.critic_count(); ++k) {
    b.q1.push_back(bind(tape, ens.critic(k).q1, trainable));
    b.q2.push_back(bind(tape, ens.critic(k).q2, trainable));
  }
  return b;
}

namespace {

Var reduce_twins(Var a, Var b, TwinReduction r) {
  if (r == TwinReduction::mean) return ad::scale(ad::add(a, b), 0.5);
  return ad::sub(a, ad::relu(ad::sub(a, b)));
}

}  // namespace

Var q_value(const BoundCritics& net, const CriticEnsemble& ens, std::size_t k,
            const Tensor& critic_obs, Var critic_act) {
  Tape& tape = critic_act.tape();
  const Var parts[] = {tape.constant(critic_obs), critic_act};
  const Var in = ad::concat_columns(parts);
  return reduce_twins(mlp_apply(net.q1[k], in), mlp_apply(net.q2[k], in), ens.config().reduction);
}

Var q_tot(const BoundCritics& net, const CriticEnsemble& ens, const Tensor& joint_obs,
          Var joint_act) {
  Var total;
  for (std::size_t k = 0; k < ens.critic_count(); ++k) {
    const CriticView& v = ens.view(k);
    const Var q = q_value(net, ens, k, ens.critic_obs(k, joint_obs),
                          ad::slice_columns(joint_act, v.act_offset, v.act_dim));
    total = k == 0 ? q : ad::add(total, q);
  }
  return ad::scale(total, 1.0 / static_cast<double>(ens.critic_count()));
}

Var critic_loss(const BoundCritics& online, const CriticEnsemble& ens, const TransitionBatch& batch,
                const Tensor& next_joint_act) {
  const std::size_t b = batch.obs.rows();
  if (b == 0) throw std::invalid_argument("critic_loss: empty batch");
  if (batch.terminal.rows() != b || batch.terminal.empty()) {
    throw std::invalid_argument("critic_loss: terminal flags missing");
  }
  if (next_joint_act.rows() != b || next_joint_act.cols() != ens.space().joint_action_dim()) {
    throw std::invalid_argument("critic_loss: next joint action shape " +
                                next_joint_act.shape_string());
  }
  Tape& tape = online.q1.front().tensors.front().tape();
  const double gamma = ens.config().gamma;
  Var total;
  for (std::size_t k = 0; k < ens.critic_count(); ++k) {
    const Tensor next_q = q_value(ens, k, ens.critic_obs(k, batch.next_obs),
                                  ens.critic_act(k, next_joint_act), true);
    Tensor y = ens.critic_reward(k, batch.rew);
    for (std::size_t r = 0; r < b; ++r) y[r] += gamma * (1.0 - batch.terminal[r]) * next_q[r];
    const Var target = tape.constant(std::move(y));
    const Var parts[] = {tape.constant(ens.critic_obs(k, batch.obs)),
                         tape.constant(ens.critic_act(k, batch.act))};
    const Var in = ad::concat_columns(parts);
    const Var l1 = ad::sum(ad::square(ad::sub(mlp_apply(online.q1[k], in), target)));
    const Var l2 = ad::sum(ad::square(ad::sub(mlp_apply(online.q2[k], in), target)));
    const Var both = ad::add(l1, l2);
    total = k == 0 ? both : ad::add(total, both);
  }
  return ad::scale(total, 1.0 / static_cast<double>(2 * b * ens.critic_count()));
}

double critic_loss(const CriticEnsemble& ens, const TransitionBatch& batch,
                   const Tensor& next_joint_act) {
  Tape tape;
  return critic_loss(bind_critics(tape, ens, false), ens, batch, next_joint_act).value().item();
}

CriticOptimizer CriticOptimizer::init(const CriticEnsemble& ens, AdamConfig config) {
  CriticOptimizer o;
  for (std::size_t k = 0; k < ens.critic_count(); ++k) {
    o.q1.push_back(AdamState::init(ens.critic(k).q1, config));
    o.q2.push_back(AdamState::init(ens.critic(k).q2, config));
  }
  return o;
}

CriticUpdate critic_update(CriticEnsemble& ens, CriticOptimizer& opt, const TransitionBatch& batch,
                           const Tensor& next_joint_act) {
  Tape tape;
  const BoundCritics online = bind_critics(tape, ens, true);
  const Var loss = critic_loss(online, ens, batch, next_joint_act);
  tape.backward(loss);
  CriticUpdate out;
  out.loss = loss.value().item();
  const double tau = ens.config().tau;
  for (std::size_t k = 0; k < ens.critic_count(); ++k) {
    TwinCritic& c = ens.critic(k);
    AdamResult r1 = adam_step(c.q1, gradient_of(tape, online.q1[k]), opt.q1[k]);
    AdamResult r2 = adam_step(c.q2, gradient_of(tape, online.q2[k]), opt.q2[k]);
    c.q1 = std::move(r1.params);
    c.q2 = std::move(r2.params);
    opt.q1[k] = std::move(r1.state);
    opt.q2[k] = std::move(r2.state);
    c.target1 = polyak_update(c.target1, c.q1, tau);
    c.target2 = polyak_update(c.target2, c.q2, tau);
  }
  const Tensor q = q_tot(ens, batch.obs, batch.act);
  for (std::size_t r = 0; r < q.size(); ++r) out.mean_q += q[r];
  out.mean_q /= static_cast<double>(q.size());
  return out;
}

double max_lipschitz_ratio(const CriticEnsemble& ens, const Tensor& joint_obs, const Tensor& a,
                           const Tensor& y) {
  if (!a.same_shape(y) || a.rows() != joint_obs.rows()) {
    throw std::invalid_argument("max_lipschitz_ratio: pair shapes disagree");
  }
  const Tensor qa = q_tot(ens, joint_obs, a);
  const Tensor qy = q_tot(ens, joint_obs, y);
  double best = -1.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(r, c) - y(r, c);
      d2 += d * d;
    }
    const double dist = std::sqrt(d2);
    if (dist < 1e-9) continue;
    best = std::max(best, std::abs(qa[r] - qy[r]) / dist);
  }
  return best;
}

double estimate_lipschitz(const CriticEnsemble& ens, const Tensor& obs_set,
                          const std::function<Tensor(const Tensor& obs, Rng& rng)>& sampler,
                          std::size_t pair_count, Rng& rng) {
  if (pair_count == 0) throw std::invalid_argument("estimate_lipschitz: pair count must be >= 1");
  double best = -1.0;
  for (std::size_t o = 0; o < obs_set.rows(); ++o) {
    const std::vector<std::size_t> rows(pair_count, o);
    const Tensor obs = select_rows(obs_set, rows);
    const Tensor a = sampler(obs, rng);
    const Tensor y = sampler(obs, rng);
    best = std::max(best, max_lipschitz_ratio(ens, obs, a, y));
  }
  if (best < 0.0) throw std::invalid_argument("estimate_lipschitz: no action pair is separated");
  return best;
}

}  // namespace macflow
