#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "macflow/metrics.hpp"

namespace macflow {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

// bounds.csv: w2_exact <= coupling_rms * (1 + loose) at every checkpoint and
// <= coupling_rms * (1 + tight) at >= `fraction` of them.
Check check_w2_vs_coupling(const CsvTable& bounds, double loose = 0.10, double tight = 0.02,
                           double fraction = 0.95);
// bounds.csv: value_gap <= L_hat * coupling_rms * (1 + tol) at every checkpoint.
Check check_value_gap_bound(const CsvTable& bounds, double tol = 0.10);
// metrics.csv: factored MI <= cap after the first `burn_in` fraction of
// training, and the joint MI peak over the first half exceeds the factored MI
// at that checkpoint.
Check check_mutual_information(const CsvTable& metrics, double cap = 0.15, double burn_in = 0.10);
// bounds.csv: window-smoothed distill loss and value gap both end below
// `ratio` times their initial smoothed values.
Check check_convergence(const CsvTable& bounds, std::size_t window = 10, double ratio = 0.5);

// All of the above on a run directory.
std::vector<Check> verify_run(const std::filesystem::path& run_dir);

}  // namespace macflow
