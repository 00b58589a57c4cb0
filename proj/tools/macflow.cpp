// macflow command line: gen-data, train, suite, bench, verify, plot.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "macflow/bench.hpp"
#include "macflow/config.hpp"
#include "macflow/dataset.hpp"
#include "macflow/plots.hpp"
#include "macflow/suite.hpp"
#include "macflow/train.hpp"
#include "macflow/verify.hpp"

namespace fs = std::filesystem;
using namespace macflow;

namespace {

// Relative output paths land under $MACFLOW_OUTPUT_ROOT when it is set.
fs::path output_path(const fs::path& p) {
  const char* root = std::getenv("MACFLOW_OUTPUT_ROOT");
  if (p.is_absolute() || !root || !*root) return p;
  return fs::path(root) / p;
}

ExperimentConfig resolve_config(const std::string& file, const std::vector<std::string>& sets) {
  if (!file.empty()) return load_config(file, sets);
  nlohmann::json j = to_json(ExperimentConfig{});
  for (const auto& s : sets) apply_override(j, s);
  return config_from_json(j);
}

fs::path latest_checkpoint(const fs::path& run) {
  std::vector<fs::path> found;
  for (const auto& e : fs::directory_iterator(run / "checkpoints"))
    if (e.path().extension() == ".ckpt") found.push_back(e.path());
  if (found.empty()) throw std::runtime_error("no checkpoints under " + (run / "checkpoints").string());
  std::sort(found.begin(), found.end());
  return found.back();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-agent flow policies: offline training, distillation and bound checks"};
  app.require_subcommand(1);

  std::string config_file, out;
  std::vector<std::string> sets;

  auto* gen = app.add_subcommand("gen-data", "generate an offline dataset (JSONL)");
  gen->add_option("--config", config_file, "JSON config file");
  gen->add_option("--set", sets, "key=value override (repeatable)");
  gen->add_option("--out", out, "dataset path")->required();

  auto* tr = app.add_subcommand("train", "train flow, critics and one-step policies");
  tr->add_option("--config", config_file, "JSON config file");
  tr->add_option("--set", sets, "key=value override (repeatable)");
  tr->add_option("--out", out, "run directory (overrides output_dir)");

  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string suite_out = "runs/suite";
  auto* su = app.add_subcommand("suite", "run every didactic study");
  su->add_option("--out", suite_out, "suite directory")->capture_default_str();
  su->add_option("--seeds", seeds, "seeds")->expected(1, -1);

  std::size_t agents = 3, flow_steps = 10, trials = 1000;
  std::vector<std::size_t> hidden{512, 512, 512, 512};
  double min_speedup = 0.0;
  std::string run_dir;
  auto* be = app.add_subcommand("bench", "time one decision step: one-step set vs joint flow");
  be->add_option("--run", run_dir, "trained run directory (latest checkpoint is loaded)");
  be->add_option("--hidden", hidden, "hidden sizes for random networks")->expected(1, -1);
  be->add_option("--agents", agents, "agents for random networks");
  be->add_option("--flow-steps", flow_steps, "Euler steps M");
  be->add_option("--trials", trials, "timed trials")->check(CLI::Range(std::size_t{1}, std::size_t{10000000}));
  be->add_option("--min-speedup", min_speedup, "fail below this speedup");
  be->add_option("--out", out, "bench.csv path");

  auto* ve = app.add_subcommand("verify", "check a run's bounds.csv and metrics.csv");
  ve->add_option("--run", run_dir, "run directory")->required();

  auto* pl = app.add_subcommand("plot", "render SVGs for a run directory");
  pl->add_option("--run", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto config = resolve_config(config_file, sets);
      const auto path = output_path(out);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      const auto data = make_dataset(config);
      save_dataset(data, path);
      std::cout << "wrote " << data.trajectories.size() << " episodes (" << data.transition_count()
                << " transitions) to " << path.string() << "\n";
      return 0;
    }
    if (tr->parsed()) {
      auto config = resolve_config(config_file, sets);
      if (!out.empty()) config.output_dir = out;
      config.output_dir = output_path(config.output_dir).string();
      const auto res = train(config);
      if (!res.evals.empty()) {
        const auto& e = res.evals.back();
        std::cout << "step " << e.step << " w2_exact " << e.bounds.prop1.w2_exact << " coupling_rms "
                  << e.bounds.prop1.coupling_rms << " value_gap " << e.bounds.prop2.value_gap << "\n";
      }
      if (res.aborted) {
        std::cerr << "training aborted: " << *res.aborted << "\n";
        return 2;
      }
      std::cout << "run written to " << res.dir.string() << "\n";
      return 0;
    }
    if (su->parsed()) {
      const auto report = run_didactic_suite(output_path(suite_out), seeds);
      for (const auto& f : report.failures) std::cerr << "failed: " << f << "\n";
      std::cout << "suite written to " << report.dir.string() << "\n";
      return report.failures.empty() ? 0 : 1;
    }
    if (be->parsed()) {
      BenchReport report;
      if (!run_dir.empty()) {
        const fs::path run = output_path(run_dir);
        const auto config = load_config(run / "config.json");
        const auto data = make_dataset(config);
        auto state = init_training(config, data.env.space);
        load_training_checkpoint(state, latest_checkpoint(run));
        report = bench_inference(state.flow, state.actors, trials, config.seed);
        if (out.empty()) out = (run / "bench.csv").string();
      } else {
        const auto nets = bench_networks(agents, hidden, flow_steps, 0);
        report = bench_inference(nets.flow, nets.set, trials, 0);
        if (out.empty()) out = "bench.csv";
      }
      const auto path = output_path(out);
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      write_bench_csv(report, path);
      for (const auto* r : {&report.one_step, &report.joint_flow})
        std::cout << r->policy << " nfe " << r->nfe << " median_ms " << r->median_ms << " p95_ms "
                  << r->p95_ms << "\n";
      std::cout << "speedup " << report.speedup << " (vs the M-step flow, not a diffusion baseline)\n";
      return report.speedup >= min_speedup ? 0 : 1;
    }
    if (ve->parsed()) {
      bool all = true;
      for (const auto& c : verify_run(output_path(run_dir))) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        all = all && c.pass;
      }
      return all ? 0 : 1;
    }
    if (pl->parsed()) {
      for (const auto& p : emit_plots(output_path(run_dir))) std::cout << p.string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
