#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "macflow/config.hpp"
#include "macflow/train.hpp"

namespace macflow {

// ---- presets ----------------------------------------------------------------

// Landmark covering, N=3, 50 trajectories, 1000 iterations, batch 64.
ExperimentConfig landmark_preset(std::uint64_t seed, const std::filesystem::path& dir);
// Pure coordination with eps_rare = 0.1; `q_max` false is the distillation-only ablation.
ExperimentConfig coordination_preset(std::uint64_t seed, bool q_max, const std::filesystem::path& dir);
ExperimentConfig xor_preset(std::uint64_t seed, const std::filesystem::path& dir);
ExperimentConfig payoff_preset(double zeta, std::uint64_t seed, const std::filesystem::path& dir);

inline const std::vector<double> kPayoffZetas{0.0, 0.25, 0.5, 0.75, 1.0};

// ---- sampling helpers -----------------------------------------------------------

// n joint-flow samples at a single observation row.
Tensor sample_flow_at(const JointFlowPolicy& flow, const Tensor& obs_row, std::size_t n, Rng& rng);
// n factored one-step samples (raw outputs) at a single observation row.
Tensor sample_factored_at(const OneStepPolicySet& set, const Tensor& obs_row, std::size_t n, Rng& rng);

// 2x2 empirical mass of argmax-decoded joint actions for two binary agents.
struct JointMass {
  double p[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
};
JointMass joint_action_mass(const Tensor& joint_action, const JointSpace& space);
JointMass dataset_action_mass(const OfflineDataset& dataset);

// Fraction of rows with a0 * a1 < 0 (the two anti-aligned quadrants).
double anti_aligned_fraction(const Tensor& joint_action);

// ---- didactic studies -----------------------------------------------------------

struct CoordinationOutcome {
  std::uint64_t seed = 0;
  bool q_max = true;
  JointMass factored;
  JointMass joint;
  JointMass dataset;
};
CoordinationOutcome run_coordination(std::uint64_t seed, bool q_max, const std::filesystem::path& dir,
                                     std::size_t samples = 2000);

struct XorOutcome {
  std::uint64_t seed = 0;
  double joint_anti = 0.0;
  double factored_anti = 0.0;
  Tensor joint_samples;
  Tensor factored_samples;
};
XorOutcome run_xor(std::uint64_t seed, const std::filesystem::path& dir, std::size_t samples = 1000);

struct PayoffOutcome {
  std::uint64_t seed = 0;
  double zeta = 0.0;
  double w2 = 0.0;  // final-checkpoint W2(joint, factored)
  double coupling_rms = 0.0;
  double return_joint = 0.0;
  double return_factored = 0.0;
};
PayoffOutcome run_payoff(double zeta, std::uint64_t seed, const std::filesystem::path& dir);

struct ScalingOutcome {
  std::size_t agents = 0;
  std::size_t steps = 0;
  double initial_loss = 0.0;  // mean of the first 10 batch losses
  double final_loss = 0.0;    // mean of the last 10
  double seconds = 0.0;
};
// Dataset generation plus joint-flow-only training on the landmark task.
ScalingOutcome run_landmark_scaling(std::size_t agents, std::size_t steps, std::size_t batch,
                                    std::uint64_t seed);

// Mean of the first and last `window` entries of a series (window clipped to its length).
std::pair<double, double> smoothed_ends(const std::vector<double>& v, std::size_t window = 10);

struct SuiteReport {
  std::filesystem::path dir;
  std::vector<CoordinationOutcome> coordination;
  std::vector<XorOutcome> xor_runs;
  std::vector<PayoffOutcome> payoff;
  bool landmark_done = false;
  double landmark_seconds = 0.0;  // training time of the landmark run
  std::vector<std::string> failures;  // "<study> seed=<s>: <what>"
};

// Runs every didactic study into `dir`, writing one CSV per figure plus SVGs.
// A failed sub-run is recorded and the suite moves on.
SuiteReport run_didactic_suite(const std::filesystem::path& dir, const std::vector<std::uint64_t>& seeds);

}  // namespace macflow
