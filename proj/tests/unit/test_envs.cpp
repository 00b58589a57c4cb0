#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "macflow/dataset.hpp"
#include "macflow/envs.hpp"

using namespace macflow;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("macflow_test_" + name);
}

double brute_force_cost(const std::vector<Point2>& agents, const std::vector<Point2>& marks) {
  std::vector<std::size_t> perm(agents.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      c += std::hypot(agents[i].x - marks[perm[i]].x, agents[i].y - marks[perm[i]].y);
    }
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<Point2> random_points(std::size_t n, Rng& rng) {
  std::vector<Point2> p(n);
  for (auto& q : p) q = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return p;
}

}  // namespace

TEST_CASE("landmark reward examples") {
  const std::vector<Point2> on{{0.1, 0.2}, {-0.5, 0.3}, {0.7, -0.7}};
  std::vector<Point2> shuffled{on[2], on[0], on[1]};
  for (double r : landmark_reward(on, shuffled)) CHECK(r == 0.0);

  const std::vector<Point2> a{{0, 0}}, l{{3, 4}};
  CHECK(landmark_reward(a, l)[0] == doctest::Approx(-5.0));

  const std::vector<Point2> agents{{0, 0}, {1, 0}}, marks{{1, 0}, {0, 0}};
  const auto rew = landmark_reward(agents, marks);
  CHECK(rew[0] == 0.0);
  CHECK(rew[1] == 0.0);
  // identity assignment would cost 1 + 1
  CHECK(-(distance(agents[0], marks[0]) + distance(agents[1], marks[1])) == doctest::Approx(-2.0));

  const std::vector<Point2> three{{0, 0}, {1, 1}, {2, 2}};
  CHECK_THROWS_AS(landmark_reward(three, marks), std::invalid_argument);
}

TEST_CASE("landmark reward matches brute force and is permutation invariant") {
  Rng rng(11);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 5; ++rep) {
      auto agents = random_points(n, rng);
      auto marks = random_points(n, rng);
      const auto rew = landmark_reward(agents, marks);
      const double total = std::accumulate(rew.begin(), rew.end(), 0.0);
      CHECK(total == doctest::Approx(-brute_force_cost(agents, marks)).epsilon(1e-12));

      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::reverse(perm.begin(), perm.end());
      std::vector<Point2> pa(n), pm(n);
      for (std::size_t i = 0; i < n; ++i) {
        pa[i] = agents[perm[i]];
        pm[i] = marks[(i + 1) % n];
      }
      const auto prew = landmark_reward(pa, pm);
      const double ptotal = std::accumulate(prew.begin(), prew.end(), 0.0);
      CHECK(ptotal == doctest::Approx(total).epsilon(1e-12));
      // with distinct random points the optimum is unique, so rewards follow agents
      for (std::size_t i = 0; i < n; ++i) CHECK(prew[i] == doctest::Approx(rew[perm[i]]));
    }
  }
}

TEST_CASE("landmark dataset shape and reproducibility") {
  LandmarkConfig cfg;
  Rng rng(5);
  const OfflineDataset ds = gen_landmark_dataset(cfg, 50, rng);
  CHECK(ds.trajectories.size() == 50);
  CHECK(ds.env.space.agent(0).obs_dim == 8);
  CHECK(ds.env.space.agent_count() == 3);
  CHECK(ds.trajectories[0].steps.size() == cfg.horizon);
  CHECK(ds.trajectories[0].steps.back().terminal);
  CHECK_FALSE(ds.trajectories[0].steps.front().terminal);
  for (const auto& traj : ds.trajectories) {
    for (const auto& s : traj.steps) {
      for (const auto& o : s.obs) {
        CHECK(std::abs(o[0]) <= 1.0);
        CHECK(std::abs(o[1]) <= 1.0);
      }
    }
  }

  Rng again(5);
  const OfflineDataset ds2 = gen_landmark_dataset(cfg, 50, again);
  CHECK(ds2.trajectories.size() == ds.trajectories.size());
  bool same = true;
  for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      const auto& a = ds.trajectories[k].steps[t];
      const auto& b = ds2.trajectories[k].steps[t];
      same = same && a.obs == b.obs && a.act == b.act && a.rew == b.rew;
    }
  }
  CHECK(same);
}

TEST_CASE("landmark agents starting on landmarks without noise stay at zero reward") {
  LandmarkConfig cfg;
  cfg.action_noise = 0.0;
  cfg.start_on_landmarks = true;
  Rng rng(2);
  const OfflineDataset ds = gen_landmark_dataset(cfg, 4, rng);
  for (const auto& traj : ds.trajectories) {
    for (const auto& s : traj.steps) {
      for (double r : s.rew) CHECK(r == 0.0);
    }
  }
}

TEST_CASE("scripted landmark policy contracts with 40 agents") {
  LandmarkConfig cfg;
  cfg.agents = 40;
  Rng rng(40);
  const OfflineDataset ds = gen_landmark_dataset(cfg, 3, rng);
  REQUIRE(ds.trajectories.size() == 3);
  const auto& marks_json = ds.env.params.at("landmarks");
  std::vector<Point2> marks;
  for (const auto& m : marks_json) marks.push_back({m[0].get<double>(), m[1].get<double>()});
  for (const auto& traj : ds.trajectories) {
    std::vector<Point2> start, end;
    for (const auto& o : traj.steps.front().obs) start.push_back({o[0], o[1]});
    const auto initial = landmark_reward(start, marks);
    // final rewards are recorded after the last move
    const auto& final_rew = traj.steps.back().rew;
    for (std::size_t i = 0; i < cfg.agents; ++i) CHECK(-final_rew[i] <= -initial[i]);
  }
}

TEST_CASE("pure coordination dataset frequencies and rewards") {
  Rng rng(3);
  const OfflineDataset ds = gen_pure_coordination_dataset(10000, 0.1, rng);
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
  for (const auto& traj : ds.trajectories) {
    const auto& s = traj.steps[0];
    const auto a0 = static_cast<std::size_t>(s.act[0][0]), a1 = static_cast<std::size_t>(s.act[1][0]);
    ++counts[a0][a1];
    CHECK(s.rew[0] == static_cast<double>(a0 + a1));
    CHECK(s.rew[1] == s.rew[0]);
  }
  CHECK(std::abs(counts[1][1] / 1e4 - 0.05) <= 0.01);

  // chi-square against (0.05, 0.45, 0.45, 0.05), 3 dof, p = 0.01 -> 11.345
  const double expected[2][2] = {{500, 4500}, {4500, 500}};
  double chi2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double d = static_cast<double>(counts[i][j]) - expected[i][j];
      chi2 += d * d / expected[i][j];
    }
  }
  CHECK(chi2 < 11.345);
  CHECK_THROWS(gen_pure_coordination_dataset(10, 0.5, rng));
}

TEST_CASE("payoff dataset modes and mean reward") {
  Rng rng(4);
  for (double zeta : {0.0, 1.0}) {
    const OfflineDataset ds = gen_payoff_dataset(zeta, 500, rng);
    for (const auto& traj : ds.trajectories) {
      const auto& s = traj.steps[0];
      CHECK((s.act[0][0] == s.act[1][0]) == (zeta == 1.0));
    }
  }
  for (double zeta : {0.25, 0.5, 0.9}) {
    const std::size_t n = 10000;
    const OfflineDataset ds = gen_payoff_dataset(zeta, n, rng);
    double mean = 0.0;
    for (const auto& traj : ds.trajectories) mean += traj.steps[0].rew[0];
    mean /= n;
    // per-sample variance: zeta (diagonal rewards 0 or 2)
    const double sigma = std::sqrt(zeta / n);
    CHECK(std::abs(mean - 1.0) <= 3.0 * sigma);
    REQUIRE(ds.meta.zeta.has_value());
    CHECK(*ds.meta.zeta == zeta);
  }
  CHECK_THROWS(gen_payoff_dataset(1.5, 10, rng));
}

TEST_CASE("xor dataset correlation and rewards") {
  CHECK(xor_reward(-1, 1) == 0.0);
  CHECK(xor_reward(1, -1) == 0.0);
  CHECK(xor_reward(1, 1) == -4.0);
  Rng rng(8);
  const OfflineDataset ds = gen_xor_dataset(10000, 0.1, rng);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  const double n = static_cast<double>(ds.trajectories.size());
  for (const auto& traj : ds.trajectories) {
    const double x = traj.steps[0].act[0][0], y = traj.steps[0].act[1][0];
    sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
    CHECK(traj.steps[0].rew[0] == doctest::Approx(xor_reward(x, y)));
  }
  const double cov = sxy / n - sx / n * sy / n;
  const double corr = cov / std::sqrt((sxx / n - sx * sx / (n * n)) * (syy / n - sy * sy / (n * n)));
  CHECK(corr <= -0.9);
}

TEST_CASE("matrix game observations and environment") {
  const auto obs = matrix_game_observations(2);
  CHECK(obs[0] == std::vector<double>{1, 1, 0});
  CHECK(obs[1] == std::vector<double>{1, 0, 1});
  MatrixGameEnv env(MatrixGame::pure_coordination);
  Rng rng(0);
  env.reset(rng);
  const std::vector<AgentAction> act{{1}, {1}};
  const StepResult r = env.step(act);
  CHECK(r.done);
  CHECK(env.descriptor().team_reward(r.rew) == 2.0);
}

TEST_CASE("dataset round trip") {
  Rng rng(9);
  for (const OfflineDataset& ds :
       {gen_landmark_dataset(LandmarkConfig{}, 3, rng), gen_payoff_dataset(0.3, 20, rng),
        gen_xor_dataset(10, 0.2, rng)}) {
    const auto path = temp_file("roundtrip.jsonl");
    save_dataset(ds, path);
    const OfflineDataset back = load_dataset(path);
    CHECK(back.env == ds.env);
    CHECK(back.meta.seed == ds.meta.seed);
    CHECK(back.meta.zeta == ds.meta.zeta);
    CHECK(back.meta.policy == ds.meta.policy);
    REQUIRE(back.trajectories.size() == ds.trajectories.size());
    for (std::size_t k = 0; k < ds.trajectories.size(); ++k) {
      const auto& a = ds.trajectories[k].steps;
      const auto& b = back.trajectories[k].steps;
      REQUIRE(a.size() == b.size());
      for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].obs == b[t].obs);
        CHECK(a[t].act == b[t].act);
        CHECK(a[t].rew == b[t].rew);
        CHECK(a[t].terminal == b[t].terminal);
      }
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("dataset save and load errors") {
  OfflineDataset empty;
  empty.env = matrix_game_descriptor(MatrixGame::xor_game);
  CHECK_THROWS_AS(save_dataset(empty, temp_file("empty.jsonl")), std::invalid_argument);

  Rng rng(1);
  const auto path = temp_file("truncated.jsonl");
  save_dataset(gen_xor_dataset(4, 0.1, rng), path);
  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  REQUIRE(lines.size() == 5);
  lines[3] = lines[3].substr(0, lines[3].size() / 2);
  {
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
  }
  std::string message;
  try {
    load_dataset(path);
  } catch (const std::runtime_error& e) {
    message = e.what();
  }
  CHECK(message.find(":4:") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("transition buffer layout") {
  Rng rng(6);
  const OfflineDataset ds = gen_landmark_dataset(LandmarkConfig{}, 2, rng);
  const TransitionBuffer buf(ds);
  CHECK(buf.size() == 50);
  const auto& all = buf.all();
  CHECK(all.obs.cols() == 24);
  CHECK(all.act.cols() == 6);
  CHECK(all.terminal(24, 0) == 1.0);
  CHECK(all.terminal(23, 0) == 0.0);
  // next_obs of row 0 is obs of row 1
  for (std::size_t c = 0; c < 24; ++c) CHECK(all.next_obs(0, c) == all.obs(1, c));

  const OfflineDataset game = gen_pure_coordination_dataset(10, 0.1, rng);
  const TransitionBuffer gb(game);
  CHECK(gb.all().act.cols() == 4);
  for (std::size_t r = 0; r < gb.size(); ++r) {
    CHECK(gb.all().act(r, 0) + gb.all().act(r, 1) == 1.0);
    CHECK(gb.all().terminal(r, 0) == 1.0);
  }
  Rng s(1);
  CHECK(gb.sample(7, s).size() == 7);
}
