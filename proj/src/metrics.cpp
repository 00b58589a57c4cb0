#include "macflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

#include "macflow/assignment.hpp"

namespace macflow {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void check_sets(const Tensor& p, const Tensor& q, const char* who) {
  if (p.rows() != q.rows()) {
    throw std::invalid_argument(std::string(who) + ": sample counts differ (" +
                                std::to_string(p.rows()) + " vs " + std::to_string(q.rows()) + ")");
  }
  if (p.cols() != q.cols()) throw std::invalid_argument(std::string(who) + ": dimensions differ");
  if (p.rows() == 0) throw std::invalid_argument(std::string(who) + ": empty sample set");
  if (!p.all_finite() || !q.all_finite()) throw std::invalid_argument(std::string(who) + ": non-finite sample");
}

}  // namespace

double w2_exact(const Tensor& p, const Tensor& q) {
  check_sets(p, q, "w2_exact");
  const std::size_t n = p.rows();
  if (n > 512) throw std::invalid_argument("w2_exact: at most 512 samples per set");
  Tensor cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = squared_distance(p.row_span(i), q.row_span(j));
  }
  return std::sqrt(solve_assignment(cost).cost / static_cast<double>(n));
}

double coupling_rms(const Tensor& p, const Tensor& q) {
  check_sets(p, q, "coupling_rms");
  double s = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) s += squared_distance(p.row_span(r), q.row_span(r));
  return std::sqrt(s / static_cast<double>(p.rows()));
}

namespace {

// Maps samples to bin/category labels 0..k-1; returns k (0 if degenerate).
std::size_t label(std::span<const double> x, std::size_t bins, bool discrete,
                  std::vector<std::size_t>& out) {
  out.resize(x.size());
  if (discrete) {
    std::map<double, std::size_t> ids;
    for (double v : x) ids.emplace(v, 0);
    std::size_t k = 0;
    for (auto& [v, id] : ids) id = k++;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = ids[x[i]];
    return k;
  }
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto b = static_cast<std::size_t>((x[i] - lo) / (hi - lo) * static_cast<double>(bins));
    out[i] = std::min(b, bins - 1);
  }
  return bins;
}

}  // namespace

double mutual_information(std::span<const double> x, std::span<const double> y, std::size_t bins,
                          bool discrete) {
  if (x.size() != y.size()) throw std::invalid_argument("mutual_information: sample counts differ");
  if (x.empty()) throw std::invalid_argument("mutual_information: no samples");
  if (!discrete && bins < 2) throw std::invalid_argument("mutual_information: need at least 2 bins");
  std::vector<std::size_t> lx, ly;
  const std::size_t kx = label(x, bins, discrete, lx);
  const std::size_t ky = label(y, bins, discrete, ly);
  if (kx < 2 || ky < 2) return 0.0;

  std::vector<double> joint(kx * ky, 0.0), px(kx, 0.0), py(ky, 0.0);
  const double w = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    joint[lx[i] * ky + ly[i]] += w;
    px[lx[i]] += w;
    py[ly[i]] += w;
  }
  double mi = 0.0;
  for (std::size_t a = 0; a < kx; ++a) {
    for (std::size_t b = 0; b < ky; ++b) {
      const double p = joint[a * ky + b];
      if (p > 0.0) mi += p * std::log(p / (px[a] * py[b]));
    }
  }
  return std::max(mi, 0.0);
}

double evaluate_return(const JointActor& actor, Environment& env, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw std::invalid_argument("evaluate_return: episodes must be >= 1");
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::vector<AgentObs> obs = env.reset(rng);
    for (std::size_t t = 0; t < env.horizon(); ++t) {
      const std::vector<AgentAction> act = actor(obs, rng);
      StepResult res = env.step(act);
      total += env.descriptor().team_reward(res.rew);
      obs = std::move(res.obs);
      if (res.done) break;
    }
  }
  return total / static_cast<double>(episodes);
}

double dataset_return(const OfflineDataset& dataset) {
  if (dataset.trajectories.empty()) throw std::invalid_argument("dataset_return: empty dataset");
  double total = 0.0;
  for (const JointTrajectory& traj : dataset.trajectories) {
    for (const JointStep& s : traj.steps) total += dataset.env.team_reward(s.rew);
  }
  return total / static_cast<double>(dataset.trajectories.size());
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal series");
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_ << "step,metric,value,aux\n";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void MetricsWriter::write(std::size_t step, const std::string& metric, double value,
                          const std::string& aux) {
  out_ << step << ',' << csv_field(metric) << ',' << format_number(value) << ',' << csv_field(aux) << '\n';
}

BoundsWriter::BoundsWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  out_ << "step,distill_loss,w2_exact,coupling_rms,L_hat,value_gap,bound,holds\n";
}

void BoundsWriter::write(const BoundsRow& r) {
  out_ << r.step << ',' << format_number(r.distill_loss) << ',' << format_number(r.w2_exact) << ','
       << format_number(r.coupling_rms) << ',' << format_number(r.lipschitz) << ','
       << format_number(r.value_gap) << ',' << format_number(r.bound) << ',' << (r.holds ? 1 : 0)
       << '\n';
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(c < row.size() ? std::stod(row[c]) : 0.0);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cells.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.emplace_back();
    } else if (ch != '\r') {
      cells.back() += ch;
    }
  }
  return cells;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw std::runtime_error(path.string() + ": empty CSV");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  }
  return t;
}

}  // namespace macflow
