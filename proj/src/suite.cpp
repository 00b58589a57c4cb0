#include "macflow/suite.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include "macflow/envs.hpp"
#include "macflow/plots.hpp"

namespace macflow {

namespace fs = std::filesystem;

ExperimentConfig landmark_preset(std::uint64_t seed, const fs::path& dir) {
  ExperimentConfig c;
  c.env = "landmark";
  c.seed = c.data_seed = seed;
  c.agents = 3;
  c.episodes = 50;
  c.steps = 1000;
  c.batch_size = 64;
  // Tuned for the 1000-iteration budget; see README.
  c.policy_lr = 3e-3;
  c.value_lr = 1e-3;
  c.normalize_q = true;
  c.eval_episodes = 10;
  c.output_dir = dir.string();
  return c;
}

namespace {

ExperimentConfig matrix_preset(const std::string& env, std::uint64_t seed, const fs::path& dir) {
  ExperimentConfig c;
  c.env = env;
  c.seed = c.data_seed = seed;
  c.samples = 2000;
  c.probe_obs = 1;  // the matrix games have a single observation
  c.output_dir = dir.string();
  return c;
}

}  // namespace

ExperimentConfig coordination_preset(std::uint64_t seed, bool q_max, const fs::path& dir) {
  ExperimentConfig c = matrix_preset("pure_coordination", seed, dir);
  c.epsilon_rare = 0.1;
  c.alpha = 0.02;
  c.q_guidance = q_max;
  return c;
}

ExperimentConfig xor_preset(std::uint64_t seed, const fs::path& dir) {
  return matrix_preset("xor", seed, dir);
}

ExperimentConfig payoff_preset(double zeta, std::uint64_t seed, const fs::path& dir) {
  ExperimentConfig c = matrix_preset("payoff_zeta", seed, dir);
  c.zeta = zeta;
  c.alpha = 0.02;
  c.eval_episodes = 1000;
  return c;
}

Tensor sample_flow_at(const JointFlowPolicy& flow, const Tensor& obs_row, std::size_t n, Rng& rng) {
  const Tensor obs = select_rows(obs_row, std::vector<std::size_t>(n, 0));
  return euler_sample(flow, obs, rng.normal_tensor(n, flow.action_dim()));
}

Tensor sample_factored_at(const OneStepPolicySet& set, const Tensor& obs_row, std::size_t n, Rng& rng) {
  const Tensor obs = select_rows(obs_row, std::vector<std::size_t>(n, 0));
  return one_step_forward(set, obs, rng.normal_tensor(n, set.space().joint_action_dim()));
}

JointMass joint_action_mass(const Tensor& joint_action, const JointSpace& space) {
  if (space.agent_count() != 2) throw std::invalid_argument("joint_action_mass: two agents expected");
  for (std::size_t i = 0; i < 2; ++i) {
    if (space.agent(i).kind != ActionKind::discrete || space.agent(i).action_dim != 2) {
      throw std::invalid_argument("joint_action_mass: binary discrete agents expected");
    }
  }
  if (joint_action.rows() == 0) throw std::invalid_argument("joint_action_mass: no samples");
  Rng unused(0);
  const auto idx = decode_discrete(joint_action, space, 0.0, unused);
  JointMass m;
  const double w = 1.0 / static_cast<double>(idx.size());
  for (const auto& row : idx) m.p[row[0]][row[1]] += w;
  return m;
}

JointMass dataset_action_mass(const OfflineDataset& dataset) {
  JointMass m;
  std::size_t n = 0;
  for (const JointTrajectory& t : dataset.trajectories) {
    for (const JointStep& s : t.steps) {
      m.p[static_cast<std::size_t>(s.act[0][0])][static_cast<std::size_t>(s.act[1][0])] += 1.0;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("dataset_action_mass: empty dataset");
  for (auto& row : m.p) {
    for (double& v : row) v /= static_cast<double>(n);
  }
  return m;
}

double anti_aligned_fraction(const Tensor& joint_action) {
  if (joint_action.cols() != 2 || joint_action.rows() == 0) {
    throw std::invalid_argument("anti_aligned_fraction: need rows of two scalars");
  }
  std::size_t anti = 0;
  for (std::size_t r = 0; r < joint_action.rows(); ++r) anti += joint_action(r, 0) * joint_action(r, 1) < 0.0;
  return static_cast<double>(anti) / static_cast<double>(joint_action.rows());
}

namespace {

TrainResult train_checked(const ExperimentConfig& c, const OfflineDataset& data) {
  TrainResult r = train(c, data);
  if (r.aborted) throw std::runtime_error("training aborted at " + *r.aborted);
  return r;
}

}  // namespace

CoordinationOutcome run_coordination(std::uint64_t seed, bool q_max, const fs::path& dir,
                                     std::size_t samples) {
  const ExperimentConfig c = coordination_preset(seed, q_max, dir);
  const OfflineDataset data = make_dataset(c);
  const TrainResult r = train_checked(c, data);
  Rng rng = Rng(seed).split(7000);
  CoordinationOutcome out;
  out.seed = seed;
  out.q_max = q_max;
  const JointSpace& space = r.state.flow.space();
  out.factored = joint_action_mass(sample_factored_at(r.state.actors, r.probe_obs, samples, rng), space);
  out.joint = joint_action_mass(sample_flow_at(r.state.flow, r.probe_obs, samples, rng), space);
  out.dataset = dataset_action_mass(data);
  return out;
}

XorOutcome run_xor(std::uint64_t seed, const fs::path& dir, std::size_t samples) {
  const ExperimentConfig c = xor_preset(seed, dir);
  const TrainResult r = train_checked(c, make_dataset(c));
  Rng rng = Rng(seed).split(7001);
  XorOutcome out;
  out.seed = seed;
  out.joint_samples = sample_flow_at(r.state.flow, r.probe_obs, samples, rng);
  out.factored_samples = sample_factored_at(r.state.actors, r.probe_obs, samples, rng);
  out.joint_anti = anti_aligned_fraction(out.joint_samples);
  out.factored_anti = anti_aligned_fraction(out.factored_samples);
  return out;
}

PayoffOutcome run_payoff(double zeta, std::uint64_t seed, const fs::path& dir) {
  const ExperimentConfig c = payoff_preset(zeta, seed, dir);
  const TrainResult r = train_checked(c, make_dataset(c));
  const CheckpointEval& last = r.evals.back();
  PayoffOutcome out;
  out.seed = seed;
  out.zeta = zeta;
  out.w2 = last.bounds.prop1.w2_exact;
  out.coupling_rms = last.bounds.prop1.coupling_rms;
  out.return_joint = last.return_joint.value_or(NAN);
  out.return_factored = last.return_factored.value_or(NAN);
  return out;
}

std::pair<double, double> smoothed_ends(const std::vector<double>& v, std::size_t window) {
  if (v.empty()) throw std::invalid_argument("smoothed_ends: empty series");
  const std::size_t w = std::min(window, v.size());
  const double first = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(w), 0.0);
  const double last = std::accumulate(v.end() - static_cast<std::ptrdiff_t>(w), v.end(), 0.0);
  return {first / static_cast<double>(w), last / static_cast<double>(w)};
}

ScalingOutcome run_landmark_scaling(std::size_t agents, std::size_t steps, std::size_t batch,
                                    std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  LandmarkConfig lc;
  lc.agents = agents;
  Rng root(seed);
  Rng data_rng = root.split(0);
  const OfflineDataset data = gen_landmark_dataset(lc, 50, data_rng);
  const TransitionBuffer buffer(data);
  Rng init_rng = root.split(1), batch_rng = root.split(2), flow_rng = root.split(3);
  const ExperimentConfig defaults;
  JointFlowPolicy flow =
      JointFlowPolicy::init(buffer.space(), defaults.flow_hidden, defaults.flow_steps, init_rng);
  AdamState opt = AdamState::init(flow.velocity(), defaults.policy_adam());
  std::vector<double> losses;
  losses.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const TransitionBatch b = buffer.sample(batch, batch_rng);
    losses.push_back(flow_update(flow, opt, b.obs, b.act, flow_rng));
    if (!std::isfinite(losses.back())) throw std::runtime_error("non-finite flow loss at step " + std::to_string(s + 1));
  }
  ScalingOutcome out;
  out.agents = agents;
  out.steps = steps;
  std::tie(out.initial_loss, out.final_loss) = smoothed_ends(losses);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

namespace {

std::ofstream open_csv(const fs::path& path, const std::string& header) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << '\n';
  return out;
}

std::vector<std::vector<double>> cells(const JointMass& m) {
  return {{m.p[0][0], m.p[0][1]}, {m.p[1][0], m.p[1][1]}};
}

template <class F>
void attempt(SuiteReport& rep, const std::string& what, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    rep.failures.push_back(what + ": " + e.what());
  }
}

}  // namespace

SuiteReport run_didactic_suite(const fs::path& dir, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("run_didactic_suite: no seeds");
  fs::create_directories(dir);
  SuiteReport rep;
  rep.dir = dir;

  attempt(rep, "landmark seed=" + std::to_string(seeds.front()), [&] {
    const ExperimentConfig c = landmark_preset(seeds.front(), dir / "landmark");
    const auto t0 = std::chrono::steady_clock::now();
    train_checked(c, make_dataset(c));
    rep.landmark_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit_plots(dir / "landmark");
    rep.landmark_done = true;
  });

  for (std::uint64_t s : seeds) {
    for (bool q : {true, false}) {
      const std::string variant = q ? "qmax" : "no_qmax";
      attempt(rep, "coordination " + variant + " seed=" + std::to_string(s), [&] {
        rep.coordination.push_back(
            run_coordination(s, q, dir / "coordination" / (variant + "_seed" + std::to_string(s))));
      });
    }
    attempt(rep, "xor seed=" + std::to_string(s),
            [&] { rep.xor_runs.push_back(run_xor(s, dir / "xor" / ("seed" + std::to_string(s)))); });
    for (double z : kPayoffZetas) {
      attempt(rep, "payoff zeta=" + format_number(z) + " seed=" + std::to_string(s), [&] {
        rep.payoff.push_back(run_payoff(
            z, s, dir / "payoff" / ("zeta" + format_number(z) + "_seed" + std::to_string(s))));
      });
    }
  }

  attempt(rep, "coordination report", [&] {
    auto csv = open_csv(dir / "coordination.csv", "seed,variant,policy,p00,p01,p10,p11");
    for (const CoordinationOutcome& o : rep.coordination) {
      const std::string variant = o.q_max ? "qmax" : "no_qmax";
      for (const auto& [name, m] : {std::pair{"factored", &o.factored}, std::pair{"joint", &o.joint},
                                    std::pair{"dataset", &o.dataset}}) {
        csv << o.seed << ',' << variant << ',' << name << ',' << format_number(m->p[0][0]) << ','
            << format_number(m->p[0][1]) << ',' << format_number(m->p[1][0]) << ','
            << format_number(m->p[1][1]) << '\n';
      }
      write_text_file(dir / ("coordination_" + variant + "_seed" + std::to_string(o.seed) + ".svg"),
                      svg_heatmap("Factored joint-action mass (" + variant + ")", cells(o.factored),
                                  {"a1=0", "a1=1"}, {"a2=0", "a2=1"}));
    }
  });

  attempt(rep, "xor report", [&] {
    auto csv = open_csv(dir / "xor.csv", "seed,joint_anti_aligned,factored_anti_aligned");
    for (const XorOutcome& o : rep.xor_runs) {
      csv << o.seed << ',' << format_number(o.joint_anti) << ',' << format_number(o.factored_anti) << '\n';
      auto samples = open_csv(dir / ("xor_samples_seed" + std::to_string(o.seed) + ".csv"), "policy,a1,a2");
      Series joint{"joint flow", {}, {}}, factored{"factored", {}, {}};
      for (const auto& [name, t, s] : {std::tuple{"joint", &o.joint_samples, &joint},
                                       std::tuple{"factored", &o.factored_samples, &factored}}) {
        for (std::size_t r = 0; r < t->rows(); ++r) {
          samples << name << ',' << format_number((*t)(r, 0)) << ',' << format_number((*t)(r, 1)) << '\n';
          s->x.push_back((*t)(r, 0));
          s->y.push_back((*t)(r, 1));
        }
      }
      write_text_file(dir / ("xor_seed" + std::to_string(o.seed) + ".svg"),
                      svg_scatter("XOR action samples", "a1", "a2", {joint, factored}));
    }
  });

  attempt(rep, "payoff report", [&] {
    auto csv = open_csv(dir / "payoff.csv", "seed,zeta,w2_exact,coupling_rms,return_joint,return_factored");
    std::vector<Series> w2, ret;
    for (const PayoffOutcome& o : rep.payoff) {
      csv << o.seed << ',' << format_number(o.zeta) << ',' << format_number(o.w2) << ','
          << format_number(o.coupling_rms) << ',' << format_number(o.return_joint) << ','
          << format_number(o.return_factored) << '\n';
      const std::string name = "seed " + std::to_string(o.seed);
      if (w2.empty() || w2.back().name != name) {
        w2.push_back({name, {}, {}});
        ret.push_back({name + " joint", {}, {}});
      }
      w2.back().x.push_back(o.zeta);
      w2.back().y.push_back(o.w2);
      ret.back().x.push_back(o.zeta);
      ret.back().y.push_back(o.return_joint);
    }
    write_text_file(dir / "payoff_w2.svg", svg_line_chart("W2(joint, factored) vs zeta", "zeta", "W2", w2));
    write_text_file(dir / "payoff_return.svg", svg_line_chart("Joint-flow return vs zeta", "zeta", "return", ret));
  });

  nlohmann::json summary = {{"failures", rep.failures}, {"landmark", rep.landmark_done}};
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  return rep;
}

}  // namespace macflow
