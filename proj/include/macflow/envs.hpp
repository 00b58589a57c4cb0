#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "macflow/assignment.hpp"
#include "macflow/dataset.hpp"
#include "macflow/rng.hpp"
#include "macflow/spaces.hpp"

namespace macflow {

using AgentObs = std::vector<double>;

struct StepResult {
  std::vector<AgentObs> obs;
  std::vector<double> rew;
  bool done = false;
};

// Online environment used for evaluation rollouts.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvDescriptor& descriptor() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::vector<AgentObs> reset(Rng& rng) = 0;
  virtual StepResult step(std::span<const AgentAction> actions) = 0;
};

// ---- landmark covering ------------------------------------------------------

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

double distance(Point2 a, Point2 b);

// Minimum-total-distance matching of agents (rows) to landmarks (columns).
Assignment landmark_assignment(std::span<const Point2> agents, std::span<const Point2> landmarks);
// Agent i receives minus its distance to the landmark it is matched with.
std::vector<double> landmark_reward(std::span<const Point2> agents,
                                    std::span<const Point2> landmarks);

struct LandmarkConfig {
  std::size_t agents = 3;
  std::size_t horizon = 25;
  double step_cap = 0.2;
  double arena = 1.0;         // positions live in [-arena, arena]^2
  double landmark_box = 0.8;  // landmarks are drawn from [-box, box]^2
  double action_noise = 0.1;  // scripted policy, relative to the commanded step
  bool start_on_landmarks = false;
};

std::vector<Point2> draw_landmarks(std::size_t count, double box, Rng& rng);

class LandmarkEnv final : public Environment {
 public:
  LandmarkEnv(LandmarkConfig config, std::vector<Point2> landmarks);

  const EnvDescriptor& descriptor() const override { return descriptor_; }
  std::size_t horizon() const override { return config_.horizon; }
  std::vector<AgentObs> reset(Rng& rng) override;
  // Each action is a 2D displacement; longer ones are rescaled to the step cap
  // and the resulting position is clamped to the arena.
  StepResult step(std::span<const AgentAction> actions) override;

  const LandmarkConfig& config() const { return config_; }
  const std::vector<Point2>& landmarks() const { return landmarks_; }
  const std::vector<Point2>& positions() const { return positions_; }
  void set_positions(std::vector<Point2> positions);

  // Near-expert behavior: every agent heads for its currently assigned
  // landmark, capped at the step length, with Gaussian noise whose scale is
  // `action_noise` times the commanded step.
  std::vector<AgentAction> scripted_actions(Rng& rng) const;

 private:
  std::vector<AgentObs> observe() const;

  LandmarkConfig config_;
  std::vector<Point2> landmarks_;
  std::vector<Point2> positions_;
  std::size_t t_ = 0;
  EnvDescriptor descriptor_;
};

EnvDescriptor landmark_descriptor(const LandmarkConfig& config, std::span<const Point2> landmarks);
OfflineDataset gen_landmark_dataset(const LandmarkConfig& config, std::size_t episodes, Rng& rng);

// ---- matrix games -----------------------------------------------------------

enum class MatrixGame { pure_coordination, payoff_zeta, xor_game };

std::string to_string(MatrixGame game);
MatrixGame matrix_game_from_string(const std::string& tag);

// Shared reward of the discrete 2x2 games: (0,0)->0, (0,1)->1, (1,0)->1, (1,1)->2.
double coordination_payoff(std::size_t a0, std::size_t a1);
double xor_reward(double a0, double a1);

// Constant observation per agent: [1, onehot(agent id)].
std::vector<AgentObs> matrix_game_observations(std::size_t agents);
EnvDescriptor matrix_game_descriptor(MatrixGame game);

class MatrixGameEnv final : public Environment {
 public:
  explicit MatrixGameEnv(MatrixGame game);

  const EnvDescriptor& descriptor() const override { return descriptor_; }
  std::size_t horizon() const override { return 1; }
  std::vector<AgentObs> reset(Rng& rng) override;
  StepResult step(std::span<const AgentAction> actions) override;

 private:
  MatrixGame game_;
  EnvDescriptor descriptor_;
};

OfflineDataset gen_payoff_dataset(double zeta, std::size_t samples, Rng& rng);
OfflineDataset gen_pure_coordination_dataset(std::size_t samples, double epsilon_rare, Rng& rng);
OfflineDataset gen_xor_dataset(std::size_t samples, double mode_std, Rng& rng);

// Rebuilds the online environment a dataset was generated from.
std::unique_ptr<Environment> make_environment(const EnvDescriptor& env);

}  // namespace macflow
