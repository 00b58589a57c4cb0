#include <doctest.h>

#include <array>
#include <cmath>

#include "macflow/flow.hpp"
#include "macflow/optim.hpp"
#include "test_util.hpp"

using namespace macflow;
using macflow::testing::linear_net;

namespace {

JointSpace scalar_space() { return JointSpace({{1, ActionKind::continuous, 1}}); }

// v(t, o, x) = wt t + wo o + wx x + b on the scalar space.
JointFlowPolicy scalar_flow(double wt, double wo, double wx, double b, std::size_t steps) {
  return {scalar_space(), linear_net(3, 1, {wt, wo, wx}, {b}), steps};
}

}  // namespace

TEST_CASE("euler: constant field adds c for any M") {
  const JointSpace space({{2, ActionKind::continuous, 2}, {1, ActionKind::continuous, 1}});
  MlpParams v = MlpParams::zeros(JointFlowPolicy::architecture(space, {}, false));
  v.layer(0).bias = Tensor::row({0.5, -1.0, 2.0});
  Rng rng(1);
  const Tensor obs = rng.normal_tensor(5, 3), noise = rng.normal_tensor(5, 3);
  for (std::size_t m : {1, 3, 10}) {
    const Tensor x = euler_sample(JointFlowPolicy(space, v, m), obs, noise);
    for (std::size_t r = 0; r < 5; ++r) {
      CHECK(x(r, 0) == doctest::Approx(noise(r, 0) + 0.5).epsilon(1e-12));
      CHECK(x(r, 1) == doctest::Approx(noise(r, 1) - 1.0).epsilon(1e-12));
      CHECK(x(r, 2) == doctest::Approx(noise(r, 2) + 2.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("euler: M=2 on v=x from 1 gives 2.25") {
  const Tensor x = euler_sample(scalar_flow(0, 0, 1, 0, 2), Tensor(1, 1, 0.0), Tensor(1, 1, 1.0));
  CHECK(x.item() == 2.25);
}

TEST_CASE("euler: M=1 is one velocity evaluation at t=0") {
  Rng rng(3);
  const JointSpace space({{2, ActionKind::continuous, 2}});
  const auto flow = JointFlowPolicy::init(space, {8, 8}, 1, rng);
  const Tensor obs = rng.normal_tensor(4, 2), noise = rng.normal_tensor(4, 2);
  const Tensor v = mlp_forward(flow.velocity(), velocity_input(Tensor(4, 1), obs, noise));
  const Tensor x = euler_sample(flow, obs, noise);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == noise[i] + v[i]);
}

TEST_CASE("euler: NFE equals M and shapes are checked") {
  for (std::size_t m : {1, 10}) {
    NfeCounter nfe;
    euler_sample(scalar_flow(0, 0, 1, 0, m), Tensor(7, 1), Tensor(7, 1), &nfe);
    CHECK(nfe.count == m);
  }
  CHECK_THROWS_AS(euler_sample(scalar_flow(0, 0, 1, 0, 2), Tensor(2, 2), Tensor(2, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(JointFlowPolicy(scalar_space(), linear_net(2, 1, {1, 1}, {0}), 2), std::invalid_argument);
  CHECK_THROWS_AS(scalar_flow(0, 0, 1, 0, 0), std::invalid_argument);
}

TEST_CASE("sample_joint_action: zero net returns the noise; seeds reproduce") {
  const JointSpace space({{3, ActionKind::continuous, 2}, {3, ActionKind::discrete, 4}});
  const JointFlowPolicy zero(space, MlpParams::zeros(JointFlowPolicy::architecture(space, {16})), 10);
  Rng rng(9);
  const Tensor obs = rng.normal_tensor(6, 6);
  Rng a(42);
  const JointSample s = sample_joint_action(zero, obs, a);
  CHECK(s.action == s.noise);
  Rng r2(5);
  const auto flow = JointFlowPolicy::init(space, {16}, 10, r2);
  Rng c(42), d(42);
  const JointSample p = sample_joint_action(flow, obs, c), q = sample_joint_action(flow, obs, d);
  CHECK(p.action == q.action);
  CHECK(p.noise == q.noise);
}

TEST_CASE("flow_bc_loss: single sample equals ||u - (a - x0)||^2") {
  const JointSpace space({{1, ActionKind::continuous, 2}});
  MlpParams v = MlpParams::zeros(JointFlowPolicy::architecture(space, {}, false));
  v.layer(0).bias = Tensor::row({0.3, -0.7});
  FlowBcDraw draw{Tensor::row({1.0, 2.0}), Tensor::column({0.25})};
  const Tensor obs = Tensor::column({0.4}), act = Tensor::row({-1.0, 0.5});
  Tape tape;
  const double loss = flow_bc_loss(bind(tape, v, false), obs, act, draw).value().item();
  const double w0 = -1.0 - 1.0, w1 = 0.5 - 2.0;
  CHECK(loss == doctest::Approx((0.3 - w0) * (0.3 - w0) + (-0.7 - w1) * (-0.7 - w1)).epsilon(1e-14));
}

TEST_CASE("flow_bc_loss: a field that outputs a - x0 exactly has zero loss") {
  // a = 0 so a - x0 = -x0 = -x_t / (1 - t) for the fixed t.
  const double t = 0.375;
  const auto flow = scalar_flow(0, 0, -1.0 / (1.0 - t), 0, 10);
  FlowBcDraw draw{Tensor::column({1.3}), Tensor::column({t})};
  Tape tape;
  const double loss =
      flow_bc_loss(bind(tape, flow.velocity(), false), Tensor(1, 1), Tensor(1, 1), draw).value().item();
  CHECK(loss < 1e-28);
}

TEST_CASE("flow_bc_loss: matches a straight-line path re-implementation") {
  Rng init(4);
  const JointSpace space({{3, ActionKind::continuous, 2}, {2, ActionKind::discrete, 3}});
  const auto flow = JointFlowPolicy::init(space, {16, 16}, 10, init);
  const Tensor obs = init.normal_tensor(32, 5), act = init.normal_tensor(32, 5);
  Rng a(77), b(77);
  const double got = flow_bc_loss(flow, obs, act, a);
  const Tensor x0 = b.normal_tensor(32, 5), t = b.uniform_tensor(32, 1, 0.0, 1.0);
  double want = 0.0;
  for (std::size_t r = 0; r < 32; ++r) {
    Tensor in(1, 1 + 5 + 5);
    in(0, 0) = t(r, 0);
    for (std::size_t c = 0; c < 5; ++c) {
      in(0, 1 + c) = obs(r, c);
      in(0, 6 + c) = (1.0 - t(r, 0)) * x0(r, c) + t(r, 0) * act(r, c);
    }
    const Tensor v = mlp_forward(flow.velocity(), in);
    for (std::size_t c = 0; c < 5; ++c) {
      const double d = v[c] - (act(r, c) - x0(r, c));
      want += d * d;
    }
  }
  want /= 32.0;
  CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, want));
  CHECK_THROWS_AS(flow_bc_loss(flow, Tensor(0, 5), Tensor(0, 5), a), std::invalid_argument);
}

TEST_CASE("flow_update: learns a 1D two-mode target and keeps both modes") {
  const JointSpace space({{1, ActionKind::continuous, 1}});
  Rng rng(12);
  auto flow = JointFlowPolicy::init(space, {64, 64}, 10, rng);
  AdamState opt = AdamState::init(flow.velocity(), AdamConfig{1e-3});
  Tensor obs(64, 1, 0.0), act(64, 1);
  for (int step = 0; step < 1500; ++step) {
    for (std::size_t r = 0; r < 64; ++r) act(r, 0) = (rng.bernoulli(0.5) ? 1.0 : -1.0) + 0.05 * rng.normal();
    flow_update(flow, opt, obs, act, rng);
  }
  const JointSample s = sample_joint_action(flow, Tensor(1000, 1, 0.0), rng);
  std::size_t pos = 0;
  for (double v : s.action.values()) pos += v > 0.0;
  CHECK(pos >= 300);
  CHECK(pos <= 700);
}

TEST_CASE("decode_discrete: argmax, mask, frequencies") {
  const JointSpace space({{1, ActionKind::discrete, 3}});
  Rng rng(0);
  CHECK(decode_discrete(Tensor::row({0.1, 2.0, -1.0}), space, 0.0, rng)[0][0] == 1);
  const std::vector<std::vector<bool>> mask{{true, false, true}};
  CHECK(decode_discrete(Tensor::row({0.1, 2.0, -1.0}), space, 0.0, rng, &mask)[0][0] == 0);
  const std::vector<std::vector<bool>> none{{false, false, false}};
  CHECK_THROWS(decode_discrete(Tensor::row({0.1, 2.0, -1.0}), space, 0.0, rng, &none));

  for (double temp : {0.5, 1.0, 5.0}) {
    const Tensor uniform(10000, 3, 0.7);
    std::array<double, 3> freq{};
    for (const auto& row : decode_discrete(uniform, space, temp, rng)) freq[row[0]] += 1e-4;
    for (double f : freq) CHECK(f == doctest::Approx(1.0 / 3.0).epsilon(0.03 * 3));
  }
}

TEST_CASE("snap_discrete and joint_row_to_actions") {
  const JointSpace space({{1, ActionKind::continuous, 2}, {1, ActionKind::discrete, 3}});
  const Tensor a = Tensor::row({0.2, -0.4, 0.1, -3.0, 0.9});
  const Tensor s = snap_discrete(a, space);
  CHECK(s == Tensor::row({0.2, -0.4, 0.0, 0.0, 1.0}));
  Rng rng(0);
  const auto acts = joint_row_to_actions(a, 0, space, 0.0, rng);
  CHECK(acts[0] == AgentAction{0.2, -0.4});
  CHECK(acts[1] == AgentAction{2.0});
}
