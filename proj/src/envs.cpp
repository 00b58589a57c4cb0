#include "macflow/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace macflow {

using nlohmann::json;

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Assignment landmark_assignment(std::span<const Point2> agents, std::span<const Point2> landmarks) {
  if (agents.size() != landmarks.size()) {
    throw std::invalid_argument("landmark_reward: " + std::to_string(agents.size()) +
                                " agents but " + std::to_string(landmarks.size()) + " landmarks");
  }
  const std::size_t n = agents.size();
  Tensor cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = distance(agents[i], landmarks[j]);
  }
  return solve_assignment(cost);
}

std::vector<double> landmark_reward(std::span<const Point2> agents,
                                    std::span<const Point2> landmarks) {
  const Assignment match = landmark_assignment(agents, landmarks);
  std::vector<double> rew(agents.size());
  for (std::size_t i = 0; i < agents.size(); ++i) {
    rew[i] = -distance(agents[i], landmarks[match.row_to_col[i]]);
  }
  return rew;
}

std::vector<Point2> draw_landmarks(std::size_t count, double box, Rng& rng) {
  std::vector<Point2> out(count);
  for (Point2& p : out) p = {rng.uniform(-box, box), rng.uniform(-box, box)};
  return out;
}

EnvDescriptor landmark_descriptor(const LandmarkConfig& config, std::span<const Point2> landmarks) {
  const std::size_t n = config.agents;
  EnvDescriptor d;
  d.tag = "landmark";
  d.space = JointSpace(std::vector<AgentSpace>(n, {2 + 2 * n, ActionKind::continuous, 2}));
  d.shared_reward = false;
  json marks = json::array();
  for (const Point2& p : landmarks) marks.push_back({p.x, p.y});
  d.params = {{"agents", n},
              {"horizon", config.horizon},
              {"step_cap", config.step_cap},
              {"arena", config.arena},
              {"landmark_box", config.landmark_box},
              {"action_noise", config.action_noise},
              {"start_on_landmarks", config.start_on_landmarks},
              {"landmarks", marks}};
  return d;
}

LandmarkEnv::LandmarkEnv(LandmarkConfig config, std::vector<Point2> landmarks)
    : config_(config), landmarks_(std::move(landmarks)) {
  if (config_.agents == 0) throw std::invalid_argument("landmark env needs at least one agent");
  if (landmarks_.size() != config_.agents) {
    throw std::invalid_argument("landmark env: agent count must equal landmark count");
  }
  for (const Point2& p : landmarks_) {
    if (std::abs(p.x) > config_.arena || std::abs(p.y) > config_.arena) {
      throw std::invalid_argument("landmark outside the arena");
    }
  }
  descriptor_ = landmark_descriptor(config_, landmarks_);
  positions_ = landmarks_;
}

std::vector<AgentObs> LandmarkEnv::observe() const {
  std::vector<AgentObs> obs(config_.agents);
  for (std::size_t i = 0; i < config_.agents; ++i) {
    obs[i] = {positions_[i].x, positions_[i].y};
    for (const Point2& l : landmarks_) {
      obs[i].push_back(l.x);
      obs[i].push_back(l.y);
    }
  }
  return obs;
}

std::vector<AgentObs> LandmarkEnv::reset(Rng& rng) {
  t_ = 0;
  if (config_.start_on_landmarks) {
    positions_ = landmarks_;
  } else {
    for (Point2& p : positions_) {
      p = {rng.uniform(-config_.arena, config_.arena), rng.uniform(-config_.arena, config_.arena)};
    }
  }
  return observe();
}

void LandmarkEnv::set_positions(std::vector<Point2> positions) {
  if (positions.size() != config_.agents) throw std::invalid_argument("wrong number of positions");
  positions_ = std::move(positions);
}

StepResult LandmarkEnv::step(std::span<const AgentAction> actions) {
  if (actions.size() != config_.agents) {
    throw std::invalid_argument("landmark env: expected " + std::to_string(config_.agents) +
                                " actions, got " + std::to_string(actions.size()));
  }
  for (std::size_t i = 0; i < config_.agents; ++i) {
    if (actions[i].size() != 2) throw std::invalid_argument("landmark actions are 2D");
    double dx = actions[i][0], dy = actions[i][1];
    if (!std::isfinite(dx) || !std::isfinite(dy)) throw std::invalid_argument("non-finite action");
    const double len = std::hypot(dx, dy);
    if (len > config_.step_cap) {
      dx *= config_.step_cap / len;
      dy *= config_.step_cap / len;
    }
    positions_[i].x = std::clamp(positions_[i].x + dx, -config_.arena, config_.arena);
    positions_[i].y = std::clamp(positions_[i].y + dy, -config_.arena, config_.arena);
  }
  ++t_;
  return {observe(), landmark_reward(positions_, landmarks_), t_ >= config_.horizon};
}

std::vector<AgentAction> LandmarkEnv::scripted_actions(Rng& rng) const {
  const Assignment match = landmark_assignment(positions_, landmarks_);
  std::vector<AgentAction> out(config_.agents);
  for (std::size_t i = 0; i < config_.agents; ++i) {
    const Point2 goal = landmarks_[match.row_to_col[i]];
    const double dx = goal.x - positions_[i].x, dy = goal.y - positions_[i].y;
    const double d = std::hypot(dx, dy);
    const double len = std::min(d, config_.step_cap);
    const double scale = d > 0.0 ? len / d : 0.0;
    const double sigma = config_.action_noise * len;
    out[i] = {dx * scale + sigma * rng.normal(), dy * scale + sigma * rng.normal()};
  }
  return out;
}

OfflineDataset gen_landmark_dataset(const LandmarkConfig& config, std::size_t episodes, Rng& rng) {
  Rng landmark_rng = rng.split(0);
  const std::vector<Point2> landmarks = draw_landmarks(config.agents, config.landmark_box, landmark_rng);
  const LandmarkEnv proto(config, landmarks);

  OfflineDataset ds;
  ds.env = proto.descriptor();
  ds.meta = {rng.seed(), std::nullopt, "scripted_assignment"};
  ds.trajectories.resize(episodes);

  const auto n_episodes = static_cast<std::ptrdiff_t>(episodes);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n_episodes; ++k) {
    LandmarkEnv env = proto;
    Rng ep_rng = rng.split(1 + static_cast<std::uint64_t>(k));
    std::vector<AgentObs> obs = env.reset(ep_rng);
    JointTrajectory& traj = ds.trajectories[static_cast<std::size_t>(k)];
    for (std::size_t t = 0; t < config.horizon; ++t) {
      std::vector<AgentAction> act = env.scripted_actions(ep_rng);
      StepResult res = env.step(act);
      traj.steps.push_back({std::move(obs), std::move(act), res.rew, res.done});
      obs = std::move(res.obs);
    }
  }
  return ds;
}

// ---- matrix games -----------------------------------------------------------

std::string to_string(MatrixGame game) {
  switch (game) {
    case MatrixGame::pure_coordination: return "pure_coordination";
    case MatrixGame::payoff_zeta: return "payoff_zeta";
    case MatrixGame::xor_game: return "xor";
  }
  return "?";
}

MatrixGame matrix_game_from_string(const std::string& tag) {
  if (tag == "pure_coordination") return MatrixGame::pure_coordination;
  if (tag == "payoff_zeta") return MatrixGame::payoff_zeta;
  if (tag == "xor") return MatrixGame::xor_game;
  throw std::invalid_argument("unknown matrix game '" + tag + "'");
}

double coordination_payoff(std::size_t a0, std::size_t a1) {
  if (a0 > 1 || a1 > 1) throw std::invalid_argument("coordination game actions are 0 or 1");
  return static_cast<double>(a0 + a1);
}

double xor_reward(double a0, double a1) { return -(a0 + a1) * (a0 + a1); }

std::vector<AgentObs> matrix_game_observations(std::size_t agents) {
  std::vector<AgentObs> obs(agents, AgentObs(1 + agents, 0.0));
  for (std::size_t i = 0; i < agents; ++i) {
    obs[i][0] = 1.0;
    obs[i][1 + i] = 1.0;
  }
  return obs;
}

EnvDescriptor matrix_game_descriptor(MatrixGame game) {
  EnvDescriptor d;
  d.tag = to_string(game);
  const bool discrete = game != MatrixGame::xor_game;
  d.space = JointSpace(std::vector<AgentSpace>(
      2, {3, discrete ? ActionKind::discrete : ActionKind::continuous, discrete ? 2u : 1u}));
  d.shared_reward = true;
  return d;
}

MatrixGameEnv::MatrixGameEnv(MatrixGame game) : game_(game), descriptor_(matrix_game_descriptor(game)) {}

std::vector<AgentObs> MatrixGameEnv::reset(Rng&) { return matrix_game_observations(2); }

StepResult MatrixGameEnv::step(std::span<const AgentAction> actions) {
  if (actions.size() != 2 || actions[0].size() != 1 || actions[1].size() != 1) {
    throw std::invalid_argument("matrix games take one scalar action per agent");
  }
  double r;
  if (game_ == MatrixGame::xor_game) {
    r = xor_reward(actions[0][0], actions[1][0]);
  } else {
    r = coordination_payoff(static_cast<std::size_t>(actions[0][0]),
                            static_cast<std::size_t>(actions[1][0]));
  }
  return {matrix_game_observations(2), {r, r}, true};
}

namespace {

OfflineDataset one_step_dataset(MatrixGame game, std::uint64_t seed, std::string policy,
                                const std::vector<std::pair<double, double>>& joint) {
  OfflineDataset ds;
  ds.env = matrix_game_descriptor(game);
  ds.meta.seed = seed;
  ds.meta.policy = std::move(policy);
  ds.trajectories.reserve(joint.size());
  const std::vector<AgentObs> obs = matrix_game_observations(2);
  for (const auto& [a0, a1] : joint) {
    const double r = game == MatrixGame::xor_game
                         ? xor_reward(a0, a1)
                         : coordination_payoff(static_cast<std::size_t>(a0),
                                               static_cast<std::size_t>(a1));
    ds.trajectories.push_back({{{obs, {{a0}, {a1}}, {r, r}, true}}});
  }
  return ds;
}

}  // namespace

OfflineDataset gen_payoff_dataset(double zeta, std::size_t samples, Rng& rng) {
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("zeta must lie in [0, 1]");
  std::vector<std::pair<double, double>> joint(samples);
  for (auto& ja : joint) {
    const bool diagonal = rng.uniform() < zeta;
    const double a0 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    ja = {a0, diagonal ? a0 : 1.0 - a0};
  }
  OfflineDataset ds = one_step_dataset(MatrixGame::payoff_zeta, rng.seed(), "zeta_mixture", joint);
  ds.meta.zeta = zeta;
  ds.env.params = {{"zeta", zeta}};
  return ds;
}

OfflineDataset gen_pure_coordination_dataset(std::size_t samples, double epsilon_rare, Rng& rng) {
  if (!(epsilon_rare > 0.0 && epsilon_rare < 0.5)) {
    throw std::invalid_argument("epsilon_rare must lie in (0, 0.5)");
  }
  std::vector<std::pair<double, double>> joint(samples);
  for (auto& ja : joint) {
    const bool rare = rng.uniform() < epsilon_rare;
    const double a0 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    ja = {a0, rare ? a0 : 1.0 - a0};
  }
  OfflineDataset ds =
      one_step_dataset(MatrixGame::pure_coordination, rng.seed(), "asymmetric_modes", joint);
  ds.env.params = {{"epsilon_rare", epsilon_rare}};
  return ds;
}

OfflineDataset gen_xor_dataset(std::size_t samples, double mode_std, Rng& rng) {
  if (!(mode_std > 0.0)) throw std::invalid_argument("mode_std must be positive");
  std::vector<std::pair<double, double>> joint(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    // Alternate modes so the split is exactly half and half.
    const double c = k % 2 == 0 ? -1.0 : 1.0;
    joint[k] = {c + mode_std * rng.normal(), -c + mode_std * rng.normal()};
  }
  OfflineDataset ds = one_step_dataset(MatrixGame::xor_game, rng.seed(), "anti_aligned_modes", joint);
  ds.env.params = {{"mode_std", mode_std}};
  return ds;
}

std::unique_ptr<Environment> make_environment(const EnvDescriptor& env) {
  if (env.tag == "landmark") {
    const json& p = env.params;
    LandmarkConfig c;
    c.agents = p.at("agents").get<std::size_t>();
    c.horizon = p.at("horizon").get<std::size_t>();
    c.step_cap = p.at("step_cap").get<double>();
    c.arena = p.at("arena").get<double>();
    c.landmark_box = p.at("landmark_box").get<double>();
    c.action_noise = p.at("action_noise").get<double>();
    c.start_on_landmarks = p.at("start_on_landmarks").get<bool>();
    std::vector<Point2> marks;
    for (const auto& m : p.at("landmarks")) marks.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
    return std::make_unique<LandmarkEnv>(c, std::move(marks));
  }
  return std::make_unique<MatrixGameEnv>(matrix_game_from_string(env.tag));
}

}  // namespace macflow
