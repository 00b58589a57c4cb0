#include "macflow/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include "macflow/envs.hpp"
#include "macflow/metrics.hpp"

namespace macflow {

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5);
  return v[std::min(idx, v.size() - 1)];
}

template <class F>
BenchRow time_policy(const std::string& name, std::size_t trials, F&& decide) {
  NfeCounter warm;
  for (int w = 0; w < 20; ++w) decide(warm);
  std::vector<double> ms;
  ms.reserve(trials);
  BenchRow row;
  row.policy = name;
  row.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    NfeCounter nfe;
    const auto t0 = std::chrono::steady_clock::now();
    decide(nfe);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (t == 0) row.nfe = nfe.count;
    if (nfe.count != row.nfe) throw std::logic_error("bench: NFE changed between trials");
  }
  row.median_ms = quantile(ms, 0.5);
  row.p95_ms = quantile(ms, 0.95);
  return row;
}

}  // namespace

BenchReport bench_inference(const JointFlowPolicy& flow, const OneStepPolicySet& set,
                            std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("bench_inference: trials must be >= 1");
  const JointSpace& space = flow.space();
  if (space.agent_count() != set.agent_count()) {
    throw std::invalid_argument("bench_inference: flow and one-step set disagree on agent count");
  }
  Rng rng(seed);
  const Tensor obs = rng.normal_tensor(1, space.joint_obs_dim());
  std::vector<std::vector<double>> agent_obs(space.agent_count());
  for (std::size_t i = 0; i < space.agent_count(); ++i) {
    const auto row = obs.row_span(0).subspan(space.obs_offset(i), space.agent(i).obs_dim);
    agent_obs[i].assign(row.begin(), row.end());
  }

  BenchReport rep;
  rep.hidden = flow.velocity().architecture().hidden;
  rep.agents = space.agent_count();
  rep.flow_steps = flow.steps();
  volatile double sink = 0.0;
  rep.one_step = time_policy("one_step", trials, [&](NfeCounter& nfe) {
    for (std::size_t i = 0; i < space.agent_count(); ++i) {
      sink = sink + one_step_act(set, i, agent_obs[i], rng, &nfe)[0];
    }
  });
  rep.joint_flow = time_policy("joint_flow", trials, [&](NfeCounter& nfe) {
    sink = sink + sample_joint_action(flow, obs, rng, &nfe).action[0];
  });
  rep.speedup = rep.joint_flow.median_ms / rep.one_step.median_ms;
  return rep;
}

BenchNetworks bench_networks(std::size_t agents, const std::vector<std::size_t>& hidden,
                             std::size_t flow_steps, std::uint64_t seed) {
  LandmarkConfig lc;
  lc.agents = agents;
  Rng rng(seed);
  Rng lm = rng.split(0);
  const JointSpace space = landmark_descriptor(lc, draw_landmarks(agents, lc.landmark_box, lm)).space;
  Rng init = rng.split(1);
  BenchNetworks n{JointFlowPolicy::init(space, hidden, flow_steps, init),
                  OneStepPolicySet::init(space, hidden, init)};
  return n;
}

void write_bench_csv(const BenchReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::string hidden;
  for (std::size_t h : r.hidden) hidden += (hidden.empty() ? "" : "x") + std::to_string(h);
  out << "policy,hidden,agents,flow_steps,nfe,trials,median_ms,p95_ms,speedup_vs_joint_flow,note\n";
  const std::string note =
      "baseline is this toolkit's M-step joint flow; 200-step diffusion baselines are not run";
  for (const BenchRow* row : {&r.one_step, &r.joint_flow}) {
    out << row->policy << ',' << hidden << ',' << r.agents << ',' << r.flow_steps << ',' << row->nfe << ','
        << row->trials << ',' << format_number(row->median_ms) << ',' << format_number(row->p95_ms) << ','
        << format_number(row == &r.one_step ? r.speedup : 1.0) << ',' << csv_field(note) << '\n';
  }
}

}  // namespace macflow
