#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "macflow/envs.hpp"
#include "macflow/rng.hpp"
#include "macflow/tensor.hpp"

namespace macflow {

// Exact W2 between equal-weight empirical sets (rows are samples):
// sqrt(min over perfect matchings of the mean squared Euclidean cost).
double w2_exact(const Tensor& p, const Tensor& q);

// Root of the mean squared distance between row-aligned samples, i.e. the
// transport cost of the identity coupling.
double coupling_rms(const Tensor& p, const Tensor& q);

// Histogram plug-in MI in nats between two scalar sample columns. Continuous
// values use `bins` equal-width bins over each column's range; discrete
// values are counted per category. A constant column gives 0.
double mutual_information(std::span<const double> x, std::span<const double> y, std::size_t bins,
                          bool discrete = false);

// Chooses per-agent actions for one decision step.
using JointActor =
    std::function<std::vector<AgentAction>(const std::vector<AgentObs>& obs, Rng& rng)>;

// Undiscounted team return averaged over episodes.
double evaluate_return(const JointActor& actor, Environment& env, std::size_t episodes, Rng& rng);

// Mean team reward of the recorded steps of a dataset, per episode.
double dataset_return(const OfflineDataset& dataset);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

// Long-format metric log: step,metric,value,aux.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(std::size_t step, const std::string& metric, double value, const std::string& aux = "");
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

struct BoundsRow {
  std::size_t step = 0;
  double distill_loss = 0.0;
  double w2_exact = 0.0;
  double coupling_rms = 0.0;
  double lipschitz = 0.0;
  double value_gap = 0.0;
  double bound = 0.0;
  bool holds = false;
};

class BoundsWriter {
 public:
  explicit BoundsWriter(const std::filesystem::path& path);
  void write(const BoundsRow& row);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

// Quotes a cell when it holds a comma, quote or line break.
std::string csv_field(const std::string& s);

// Fixed-precision text for CSV cells (round-trippable doubles).
std::string format_number(double v);

// Minimal RFC-4180 reader: header names and rows of cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  std::vector<double> numbers(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace macflow
