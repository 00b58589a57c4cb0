#include "macflow/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "macflow/suite.hpp"

namespace macflow {

namespace {

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void require_rows(const CsvTable& t, const char* what) {
  if (t.rows.empty()) throw std::invalid_argument(std::string(what) + ": no checkpoints");
}

}  // namespace

Check check_w2_vs_coupling(const CsvTable& bounds, double loose, double tight, double fraction) {
  require_rows(bounds, "check_w2_vs_coupling");
  const auto w2 = bounds.numbers("w2_exact"), rms = bounds.numbers("coupling_rms");
  std::size_t loose_ok = 0, tight_ok = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < w2.size(); ++i) {
    loose_ok += w2[i] <= rms[i] * (1.0 + loose);
    tight_ok += w2[i] <= rms[i] * (1.0 + tight);
    if (rms[i] > 0.0) worst = std::max(worst, w2[i] / rms[i]);
  }
  const double n = static_cast<double>(w2.size());
  Check c{"w2_exact <= coupling_rms", loose_ok == w2.size() && tight_ok >= fraction * n, ""};
  c.detail = fmt("max ratio %.4f; %.0f%% within loose slack", worst, 100.0 * loose_ok / n) +
             fmt(", %.0f%% within tight slack", 100.0 * tight_ok / n);
  return c;
}

Check check_value_gap_bound(const CsvTable& bounds, double tol) {
  require_rows(bounds, "check_value_gap_bound");
  const auto gap = bounds.numbers("value_gap"), lip = bounds.numbers("L_hat"),
             rms = bounds.numbers("coupling_rms");
  std::size_t ok = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < gap.size(); ++i) {
    const double bound = lip[i] * rms[i];
    ok += gap[i] <= bound * (1.0 + tol);
    if (bound > 0.0) worst = std::max(worst, gap[i] / bound);
  }
  return {"value_gap <= L_hat * coupling_rms", ok == gap.size(),
          fmt("%.0f of %.0f checkpoints hold; max gap/bound %.4f", static_cast<double>(ok),
              static_cast<double>(gap.size()), worst)};
}

Check check_mutual_information(const CsvTable& metrics, double cap, double burn_in) {
  const std::size_t cs = metrics.column("step"), cm = metrics.column("metric"), cv = metrics.column("value");
  std::map<double, double> joint, factored;
  double last_step = 0.0;
  for (const auto& row : metrics.rows) {
    const double step = std::stod(row[cs]);
    last_step = std::max(last_step, step);
    if (row[cm] == "mi_joint") joint[step] = std::stod(row[cv]);
    if (row[cm] == "mi_factored") factored[step] = std::stod(row[cv]);
  }
  if (joint.empty() || factored.empty()) throw std::invalid_argument("check_mutual_information: no MI rows");
  double worst = 0.0;
  bool capped = true;
  for (const auto& [step, v] : factored) {
    if (step <= burn_in * last_step) continue;
    worst = std::max(worst, v);
    capped = capped && v <= cap;
  }
  double peak = -1.0, peak_step = 0.0;
  for (const auto& [step, v] : joint) {
    if (step <= 0.5 * last_step && v > peak) peak = v, peak_step = step;
  }
  const double concurrent = factored.count(peak_step) ? factored[peak_step] : INFINITY;
  return {"inter-agent MI", capped && peak > concurrent,
          fmt("max factored MI after burn-in %.4f; joint peak %.4f", worst, peak) +
              fmt(" at step %.0f vs factored %.4f", peak_step, concurrent)};
}

Check check_convergence(const CsvTable& bounds, std::size_t window, double ratio) {
  require_rows(bounds, "check_convergence");
  const auto [l0, l1] = smoothed_ends(bounds.numbers("distill_loss"), window);
  const auto [g0, g1] = smoothed_ends(bounds.numbers("value_gap"), window);
  return {"distill loss and value gap contract", l1 < ratio * l0 && g1 < ratio * g0,
          fmt("distill loss %.4g -> %.4g", l0, l1) + fmt(", value gap %.4g -> %.4g", g0, g1)};
}

std::vector<Check> verify_run(const std::filesystem::path& run_dir) {
  const CsvTable bounds = read_csv(run_dir / "bounds.csv");
  const CsvTable metrics = read_csv(run_dir / "metrics.csv");
  return {check_w2_vs_coupling(bounds), check_value_gap_bound(bounds), check_mutual_information(metrics),
          check_convergence(bounds)};
}

}  // namespace macflow
