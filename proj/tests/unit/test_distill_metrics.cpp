#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "macflow/distill.hpp"
#include "macflow/envs.hpp"
#include "macflow/metrics.hpp"
#include "test_util.hpp"

using namespace macflow;
using macflow::testing::linear_net;

namespace {

JointSpace scalar_space() { return JointSpace({{1, ActionKind::continuous, 1}}); }

// M=1 flow with v = wx x + b, so its sample is (1 + wx) z + b.
JointFlowPolicy affine_flow(double wx, double b) { return {scalar_space(), linear_net(3, 1, {0, 0, wx}, {b}), 1}; }

// mu(o, z) = wz z + b
OneStepPolicySet affine_set(double wz, double b) { return {scalar_space(), {linear_net(2, 1, {0, wz}, {b})}}; }

CriticEnsemble linear_critic(double slope, double offset) {
  const MlpParams q = linear_net(2, 1, {0, slope}, {offset}, true);
  return {scalar_space(), {}, {TwinCritic{q, q, q, q}}};
}

double brute_force_w2(const Tensor& p, const Tensor& q) {
  const std::size_t n = p.rows();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) d += (p(i, c) - q(perm[i], c)) * (p(i, c) - q(perm[i], c));
      s += d;
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(n));
}

std::vector<double> column_of(const Tensor& t, std::size_t c) {
  std::vector<double> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r] = t(r, c);
  return out;
}

}  // namespace

// ---- W2 / coupling ---------------------------------------------------------------

TEST_CASE("w2_exact: small hand cases") {
  CHECK(w2_exact(Tensor::column({0, 2}), Tensor::column({1, 3})) == 1.0);
  CHECK(w2_exact(Tensor::column({0}), Tensor::column({3})) == 3.0);
  Rng rng(0);
  const Tensor p = rng.normal_tensor(20, 3);
  CHECK(w2_exact(p, p) == 0.0);
  CHECK_THROWS_AS(w2_exact(Tensor::column({0, 1}), Tensor::column({0})), std::invalid_argument);
  CHECK_THROWS_AS(w2_exact(Tensor(513, 1), Tensor(513, 1)), std::invalid_argument);
}

TEST_CASE("w2_exact equals permutation enumeration on 100 random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(7), d = 1 + rng.index(3);
    const Tensor p = rng.normal_tensor(n, d), q = rng.normal_tensor(n, d);
    CHECK(w2_exact(p, q) == brute_force_w2(p, q));
  }
}

TEST_CASE("coupling_rms bounds w2_exact from above") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor p = rng.normal_tensor(30, 2), q = rng.normal_tensor(30, 2);
    CHECK(w2_exact(p, q) <= coupling_rms(p, q) + 1e-12);
  }
  CHECK(coupling_rms(Tensor::row({0, 0}), Tensor::row({3, 4})) == 5.0);
}

// ---- distillation ------------------------------------------------------------------

TEST_CASE("distill_loss: exact copy gives 0, scalar 1 vs 3 gives 4") {
  const auto flow = JointFlowPolicy(scalar_space(), linear_net(3, 1, {0.4, -0.3, 0.5}, {0.2}), 1);
  // At t = 0 the flow sample is -0.3 o + 1.5 z + 0.2.
  const OneStepPolicySet copy(scalar_space(), {linear_net(2, 1, {-0.3, 1.5}, {0.2})});
  Rng rng(1);
  CHECK(distill_loss(copy, flow, rng.normal_tensor(64, 1), rng) < 1e-28);

  Tape tape;
  const Var out = tape.constant(Tensor::column({1.0}));
  CHECK(distill_loss(out, Tensor::column({3.0})).value().item() == 4.0);
  CHECK_THROWS_AS(distill_loss(out, Tensor::row({3.0, 1.0})), std::invalid_argument);
}

TEST_CASE("distill_loss: matches a two-pass recomputation with the stored noise") {
  Rng init(5);
  const JointSpace space({{3, ActionKind::continuous, 2}, {2, ActionKind::discrete, 3}});
  const auto flow = JointFlowPolicy::init(space, {16, 16}, 10, init);
  const auto set = OneStepPolicySet::init(space, {16, 16}, init);
  const Tensor obs = init.normal_tensor(40, 5);
  Rng a(99), b(99);
  const double got = distill_loss(set, flow, obs, a);
  const Tensor noise = b.normal_tensor(40, 5);
  const Tensor target = euler_sample(flow, obs, noise);
  double want = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t oo = space.obs_offset(i), ao = space.action_offset(i);
    const std::size_t od = space.agent(i).obs_dim, ad = space.agent(i).action_dim;
    Tensor in(40, od + ad);
    for (std::size_t r = 0; r < 40; ++r) {
      for (std::size_t c = 0; c < od; ++c) in(r, c) = obs(r, oo + c);
      for (std::size_t c = 0; c < ad; ++c) in(r, od + c) = noise(r, ao + c);
    }
    const Tensor y = mlp_forward(set.net(i), in);
    for (std::size_t r = 0; r < 40; ++r) {
      for (std::size_t c = 0; c < ad; ++c) want += std::pow(y(r, c) - target(r, ao + c), 2);
    }
  }
  want /= 40.0;
  CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, want));
}

TEST_CASE("actor_loss: linear combination of the Q term and distillation") {
  const OneStepPolicySet zero = affine_set(0, 0);
  const Tensor obs(2, 1), noise(2, 1), target = Tensor::column({1.0, 0.0});
  ActorConfig cfg;
  cfg.alpha = 3.0;
  {
    Tape tape;
    const auto t = actor_loss(bind_policies(tape, zero, true), zero, linear_critic(0, 2), obs, noise, target, cfg);
    CHECK(t.values.q_term == 2.0);
    CHECK(t.values.distill_loss == 0.5);
    CHECK(t.values.total_actor_loss == -0.5);
    CHECK(t.total.value().item() == -0.5);
  }
  cfg.alpha = 1.0;
  {
    Tape tape;
    const auto t = actor_loss(bind_policies(tape, zero, true), zero, linear_critic(0, 0), obs, noise, target, cfg);
    CHECK(t.values.total_actor_loss == t.values.distill_loss);
  }
  cfg.alpha = 0.0;
  {
    Rng rng(4);
    const auto set = OneStepPolicySet::init(scalar_space(), {8}, rng);
    Tape tape;
    const auto nets = bind_policies(tape, set, true);
    const auto t = actor_loss(nets, set, linear_critic(0, 0), rng.normal_tensor(5, 1), rng.normal_tensor(5, 1),
                              rng.normal_tensor(5, 1), cfg);
    CHECK(t.values.total_actor_loss == 0.0);
    tape.backward(t.total);
    gradient_of(tape, nets[0]).for_each_tensor([](const Tensor& g) {
      for (double v : g.values()) CHECK(v == 0.0);
    });
  }
}

TEST_CASE("actor_update: critics and flow are inputs only") {
  Rng rng(7);
  const JointSpace space({{2, ActionKind::continuous, 2}, {2, ActionKind::continuous, 1}});
  auto set = OneStepPolicySet::init(space, {8}, rng);
  const auto flow = JointFlowPolicy::init(space, {8}, 10, rng);
  const auto critics = CriticEnsemble::init(space, {{8}}, rng);
  const auto flow_before = flow;
  const auto critics_before = critics;
  auto opt = ActorOptimizer::init(set, AdamConfig{1e-2});
  const auto before = set;
  actor_update(set, opt, flow, critics, rng.normal_tensor(8, 4), rng, ActorConfig{});
  CHECK_FALSE(set.net(0) == before.net(0));
  CHECK(flow.velocity() == flow_before.velocity());
  CHECK(critics.critic(1).q2 == critics_before.critic(1).q2);
}

TEST_CASE("one_step_act: zero net, determinism, NFE") {
  const JointSpace space(std::vector<AgentSpace>(3, {4, ActionKind::continuous, 2}));
  const auto arch = OneStepPolicySet::architecture(space.agent(0), {16});
  const OneStepPolicySet zero(space, {MlpParams::zeros(arch), MlpParams::zeros(arch), MlpParams::zeros(arch)});
  Rng rng(0);
  const std::vector<double> o{0.1, 0.2, 0.3, 0.4};
  CHECK(one_step_act(zero, 1, o, rng) == AgentAction{0.0, 0.0});

  const auto set = OneStepPolicySet::init(space, {16}, rng);
  Rng a(11), b(11);
  CHECK(one_step_act(set, 2, o, a) == one_step_act(set, 2, o, b));

  NfeCounter one_step;
  for (std::size_t i = 0; i < 3; ++i) one_step_act(set, i, o, rng, &one_step);
  CHECK(one_step.count == 3);
  const auto flow = JointFlowPolicy::init(space, {16}, 10, rng);
  NfeCounter joint;
  sample_joint_action(flow, Tensor(1, 12, 0.1), rng, &joint);
  CHECK(joint.count == 10);
  CHECK_THROWS_AS(one_step_act(set, 0, std::vector<double>{1.0}, rng), std::invalid_argument);
}

// ---- bound checks ------------------------------------------------------------------

TEST_CASE("verify_prop1: identical, translated, capped") {
  Rng rng(2);
  const Tensor obs(2, 1, 0.0);
  const auto flow = affine_flow(-0.9, 0.0);  // sample 0.1 z
  const auto same = verify_prop1(affine_set(0.1, 0.0), flow, obs, 256, 0.1, rng);
  CHECK(same.coupling_rms < 1e-15);
  CHECK(same.w2_exact < 0.03);
  const auto shifted = verify_prop1(affine_set(0.1, 2.0), flow, obs, 256, 0.1, rng);
  CHECK(shifted.coupling_rms == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(shifted.w2_exact == doctest::Approx(2.0).epsilon(0.02));
  CHECK(shifted.holds);
  CHECK_THROWS_AS(verify_prop1(affine_set(0.1, 0.0), flow, obs, kMaxExactSamples + 1, 0.1, rng),
                  std::invalid_argument);
}

TEST_CASE("verify_prop2: constant, identical, linear critics") {
  Rng rng(3);
  const Tensor obs(2, 1, 0.0);
  const auto flow = affine_flow(0.0, 0.0);  // sample z
  const auto constant = verify_prop2(affine_set(1.0, 0.5), flow, linear_critic(0, 1.3), obs, 64, 500, 0.1, rng);
  CHECK(constant.value_gap == 0.0);
  CHECK(constant.holds);
  const auto identical = verify_prop2(affine_set(1.0, 0.0), flow, linear_critic(2, 0), obs, 64, 500, 0.1, rng);
  CHECK(identical.value_gap == 0.0);
  const auto linear = verify_prop2(affine_set(1.0, 0.5), flow, linear_critic(2, 0), obs, 64, 500, 0.1, rng);
  CHECK(linear.value_gap == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(linear.lipschitz == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(linear.bound == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(linear.holds);
}

// ---- mutual information, returns, ranks ---------------------------------------------

TEST_CASE("mutual_information: independent, matched, uniform payoff, constant") {
  Rng rng(5);
  std::vector<double> x(10000), y(10000), same(10000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.bernoulli(0.5);
    y[i] = rng.bernoulli(0.5);
  }
  CHECK(std::abs(mutual_information(x, y, 2, true)) <= 0.02);
  CHECK(mutual_information(x, x, 2, true) == doctest::Approx(std::log(2.0)).epsilon(0.02 / std::log(2.0)));
  CHECK(mutual_information(x, std::vector<double>(10000, 1.0), 16) == 0.0);

  const OfflineDataset d = gen_payoff_dataset(0.5, 10000, rng);
  std::vector<double> a0, a1;
  for (const auto& tr : d.trajectories) {
    for (const auto& s : tr.steps) {
      a0.push_back(s.act[0][0]);
      a1.push_back(s.act[1][0]);
    }
  }
  CHECK(std::abs(mutual_information(a0, a1, 2, true)) <= 0.02);

  // continuous: y = x through 16 bins carries ln 16 nats.
  const Tensor g = rng.uniform_tensor(20000, 1, 0.0, 1.0);
  const auto gx = column_of(g, 0);
  CHECK(mutual_information(gx, gx, 16) == doctest::Approx(std::log(16.0)).epsilon(0.01));
}

TEST_CASE("evaluate_return on the coordination game") {
  MatrixGameEnv env(MatrixGame::pure_coordination);
  Rng rng(0);
  const JointActor both_one = [](const std::vector<AgentObs>&, Rng&) {
    return std::vector<AgentAction>{{1.0}, {1.0}};
  };
  const JointActor both_zero = [](const std::vector<AgentObs>&, Rng&) {
    return std::vector<AgentAction>{{0.0}, {0.0}};
  };
  CHECK(evaluate_return(both_one, env, 20, rng) == 2.0);
  CHECK(evaluate_return(both_zero, env, 20, rng) == 0.0);
}

TEST_CASE("payoff dataset replay returns about 1") {
  Rng rng(8);
  for (double zeta : {0.0, 0.5, 1.0}) {
    const OfflineDataset d = gen_payoff_dataset(zeta, 10000, rng);
    // variance of one draw is zeta (rewards 0/2 vs 1), 3 sigma.
    const double tol = 3.0 * std::sqrt(std::max(zeta, 1e-12) / 10000.0) + 1e-12;
    CHECK(std::abs(dataset_return(d) - 1.0) <= tol);

    auto env = make_environment(d.env);
    std::size_t k = 0;
    const JointActor replay = [&](const std::vector<AgentObs>&, Rng&) {
      const auto& s = d.trajectories[k++ % d.trajectories.size()].steps[0];
      return s.act;
    };
    CHECK(std::abs(evaluate_return(replay, *env, 10000, rng) - 1.0) <= tol);
  }
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman(x, std::vector<double>{2, 4, 6, 8, 100}) == doctest::Approx(1.0));
  CHECK(spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman(x, std::vector<double>{1, 1, 2, 2, 3}) == doctest::Approx(0.9486832980505138));
}

TEST_CASE("csv writers and reader round trip") {
  const auto dir = macflow::testing::scratch_dir("csv");
  {
    MetricsWriter m(dir / "metrics.csv");
    m.write(0, "flow_bc", 0.1, "note, with \"quotes\"");
    m.write(5, "mi_joint", 1.0 / 3.0);
    BoundsWriter b(dir / "bounds.csv");
    b.write({10, 0.5, 0.25, 0.3, 2.0, 0.1, 0.6, true});
  }
  const CsvTable m = read_csv(dir / "metrics.csv");
  REQUIRE(m.rows.size() == 2);
  CHECK(m.rows[0][m.column("aux")] == "note, with \"quotes\"");
  CHECK(m.numbers("value")[1] == 1.0 / 3.0);
  const CsvTable b = read_csv(dir / "bounds.csv");
  CHECK(b.numbers("coupling_rms")[0] == 0.3);
  CHECK(b.numbers("L_hat")[0] == 2.0);
  CHECK_THROWS_WITH_AS(b.column("nope"), doctest::Contains("nope"), std::invalid_argument);
  CHECK(std::stod(format_number(0.1)) == 0.1);
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a\"b") == "\"a\"\"b\"");
}
