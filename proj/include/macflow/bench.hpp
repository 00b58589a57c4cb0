#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "macflow/distill.hpp"
#include "macflow/flow.hpp"

namespace macflow {

struct BenchRow {
  std::string policy;      // "one_step" or "joint_flow"
  std::size_t nfe = 0;     // network evaluations per decision step
  std::size_t trials = 0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

struct BenchReport {
  std::vector<std::size_t> hidden;
  std::size_t agents = 0;
  std::size_t flow_steps = 0;
  BenchRow one_step;
  BenchRow joint_flow;
  double speedup = 0.0;  // joint median / one-step median
};

// Times one decision step (all agents act on one joint observation) for the
// factored one-step set and for the M-step joint flow. Each trial is timed
// separately after a short warm-up.
BenchReport bench_inference(const JointFlowPolicy& flow, const OneStepPolicySet& set,
                            std::size_t trials, std::uint64_t seed);

// Randomly initialised landmark-task networks of the given width; latency
// does not depend on the weights.
struct BenchNetworks {
  JointFlowPolicy flow;
  OneStepPolicySet set;
};
BenchNetworks bench_networks(std::size_t agents, const std::vector<std::size_t>& hidden,
                             std::size_t flow_steps, std::uint64_t seed);

void write_bench_csv(const BenchReport& report, const std::filesystem::path& path);

}  // namespace macflow
