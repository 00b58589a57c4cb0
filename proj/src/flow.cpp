#include "macflow/flow.hpp"

#include <stdexcept>
#include <string>

namespace macflow {

JointFlowPolicy::JointFlowPolicy(JointSpace space, MlpParams velocity, std::size_t steps)
    : space_(std::move(space)), velocity_(std::move(velocity)), steps_(steps) {
  if (steps_ == 0) throw std::invalid_argument("flow step count must be at least 1");
  velocity_.validate();
  const std::size_t want_in = 1 + space_.joint_obs_dim() + space_.joint_action_dim();
  if (velocity_.input_dim() != want_in || velocity_.output_dim() != space_.joint_action_dim()) {
    throw std::invalid_argument("velocity net must map " + std::to_string(want_in) + " -> " +
                                std::to_string(space_.joint_action_dim()) + " features");
  }
}

MlpArchitecture JointFlowPolicy::architecture(const JointSpace& space,
                                              std::vector<std::size_t> hidden, bool layer_norm) {
  return {1 + space.joint_obs_dim() + space.joint_action_dim(), std::move(hidden),
          space.joint_action_dim(), layer_norm, Activation::gelu};
}

JointFlowPolicy JointFlowPolicy::init(const JointSpace& space, std::vector<std::size_t> hidden,
                                      std::size_t steps, Rng& rng, bool layer_norm) {
  return {space, MlpParams::init(architecture(space, std::move(hidden), layer_norm), rng), steps};
}

JointFlowPolicy JointFlowPolicy::with_velocity(MlpParams velocity) const {
  return {space_, std::move(velocity), steps_};
}

Tensor velocity_input(const Tensor& t, const Tensor& obs, const Tensor& x) {
  const Tensor* parts[] = {&t, &obs, &x};
  return concat_columns(parts);
}

FlowBcDraw draw_flow_bc(std::size_t batch, std::size_t action_dim, Rng& rng) {
  FlowBcDraw d;
  d.noise = rng.normal_tensor(batch, action_dim);
  d.time = rng.uniform_tensor(batch, 1, 0.0, 1.0);
  return d;
}

Var flow_bc_loss(const BoundMlp& velocity, const Tensor& obs, const Tensor& act,
                 const FlowBcDraw& draw) {
  const std::size_t b = act.rows();
  if (b == 0) throw std::invalid_argument("flow_bc_loss: empty batch");
  if (obs.rows() != b || draw.noise.rows() != b || draw.time.rows() != b ||
      !draw.noise.same_shape(act)) {
    throw std::invalid_argument("flow_bc_loss: batch shapes disagree");
  }
  Tensor xt(b, act.cols()), target(b, act.cols());
  for (std::size_t r = 0; r < b; ++r) {
    const double t = draw.time(r, 0);
    for (std::size_t c = 0; c < act.cols(); ++c) {
      const double x0 = draw.noise(r, c), a = act(r, c);
      xt(r, c) = (1.0 - t) * x0 + t * a;
      target(r, c) = a - x0;
    }
  }
  Tape& tape = velocity.tensors.front().tape();
  const Var in = tape.constant(velocity_input(draw.time, obs, xt));
  const Var resid = ad::sub(mlp_apply(velocity, in), tape.constant(std::move(target)));
  return ad::scale(ad::sum(ad::square(resid)), 1.0 / static_cast<double>(b));
}

double flow_bc_loss(const JointFlowPolicy& policy, const Tensor& obs, const Tensor& act, Rng& rng) {
  const FlowBcDraw draw = draw_flow_bc(act.rows(), act.cols(), rng);
  Tape tape;
  return flow_bc_loss(bind(tape, policy.velocity(), false), obs, act, draw).value().item();
}

double flow_update(JointFlowPolicy& policy, AdamState& opt, const Tensor& obs, const Tensor& act,
                   Rng& rng) {
  const FlowBcDraw draw = draw_flow_bc(obs.rows(), policy.action_dim(), rng);
  Tape tape;
  const BoundMlp v = bind(tape, policy.velocity(), true);
  const Var loss = flow_bc_loss(v, obs, act, draw);
  tape.backward(loss);
  AdamResult r = adam_step(policy.velocity(), gradient_of(tape, v), opt);
  policy = policy.with_velocity(std::move(r.params));
  opt = std::move(r.state);
  return loss.value().item();
}

Tensor euler_sample(const JointFlowPolicy& policy, const Tensor& obs, const Tensor& noise,
                    NfeCounter* nfe) {
  if (noise.cols() != policy.action_dim() || obs.cols() != policy.obs_dim() ||
      noise.rows() != obs.rows()) {
    throw std::invalid_argument("euler_sample: expected " + std::to_string(policy.obs_dim()) +
                                "-dim observations and " + std::to_string(policy.action_dim()) +
                                "-dim noise, got " + obs.shape_string() + " and " +
                                noise.shape_string());
  }
  const std::size_t m = policy.steps();
  const double dt = 1.0 / static_cast<double>(m);
  Tensor x = noise;
  Tensor t(obs.rows(), 1);
  for (std::size_t k = 0; k < m; ++k) {
    t.fill(static_cast<double>(k) * dt);
    const Tensor v = mlp_forward(policy.velocity(), velocity_input(t, obs, x));
    if (nfe) ++nfe->count;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v[i];
  }
  return x;
}

JointSample sample_joint_action(const JointFlowPolicy& policy, const Tensor& obs, Rng& rng,
                                NfeCounter* nfe) {
  JointSample s;
  s.noise = rng.normal_tensor(obs.rows(), policy.action_dim());
  s.action = euler_sample(policy, obs, s.noise, nfe);
  return s;
}

std::vector<std::vector<std::size_t>> decode_discrete(const Tensor& joint_action,
                                                      const JointSpace& space, double temperature,
                                                      Rng& rng,
                                                      const std::vector<std::vector<bool>>* legal) {
  if (!space.any_discrete()) throw std::invalid_argument("decode_discrete: no discrete agents");
  if (joint_action.cols() != space.joint_action_dim()) {
    throw std::invalid_argument("decode_discrete: joint action width mismatch");
  }
  if (legal && legal->size() != space.agent_count()) {
    throw std::invalid_argument("decode_discrete: one legal-action mask per agent expected");
  }
  std::vector<std::vector<std::size_t>> out(joint_action.rows(),
                                            std::vector<std::size_t>(space.agent_count(), 0));
  for (std::size_t r = 0; r < joint_action.rows(); ++r) {
    const auto row = joint_action.row_span(r);
    for (std::size_t i = 0; i < space.agent_count(); ++i) {
      const AgentSpace& a = space.agent(i);
      if (a.kind != ActionKind::discrete) continue;
      const double u = temperature > 0.0 ? rng.uniform() : 0.0;
      out[r][i] = decode_discrete_block(row.subspan(space.action_offset(i), a.action_dim),
                                        temperature, legal ? &(*legal)[i] : nullptr, u);
    }
  }
  return out;
}

std::vector<AgentAction> joint_row_to_actions(const Tensor& joint_action, std::size_t row,
                                              const JointSpace& space, double temperature,
                                              Rng& rng) {
  std::vector<AgentAction> out(space.agent_count());
  const auto values = joint_action.row_span(row);
  for (std::size_t i = 0; i < space.agent_count(); ++i) {
    const AgentSpace& a = space.agent(i);
    const auto block = values.subspan(space.action_offset(i), a.action_dim);
    if (a.kind == ActionKind::discrete) {
      const double u = temperature > 0.0 ? rng.uniform() : 0.0;
      out[i] = {static_cast<double>(decode_discrete_block(block, temperature, nullptr, u))};
    } else {
      out[i].assign(block.begin(), block.end());
    }
  }
  return out;
}

Tensor snap_discrete(const Tensor& joint_action, const JointSpace& space) {
  Tensor out = joint_action;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row_span(r);
    for (std::size_t i = 0; i < space.agent_count(); ++i) {
      const AgentSpace& a = space.agent(i);
      if (a.kind != ActionKind::discrete) continue;
      auto block = row.subspan(space.action_offset(i), a.action_dim);
      const std::size_t k = decode_discrete_block(block, 0.0, nullptr, 0.0);
      for (std::size_t j = 0; j < block.size(); ++j) block[j] = j == k ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace macflow
