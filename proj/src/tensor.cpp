#include "macflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace macflow {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t expected =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (expected != data_.size()) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_string());
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n, 1}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  const std::size_t c = cols();
  return c == 0 ? 0 : data_.size() / c;
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::span<double> Tensor::row_span(std::size_t r) {
  return std::span<double>(data_).subspan(r * cols(), cols());
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * cols(), cols());
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::invalid_argument("item() needs a single-element tensor, got shape " +
                                shape_string());
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

Tensor concat_columns(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_columns: no inputs");
  const std::size_t rows = parts.front()->rows();
  std::size_t cols = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) {
      throw std::invalid_argument("concat_columns: row mismatch, expected " +
                                  std::to_string(rows) + " got " + std::to_string(p->rows()));
    }
    cols += p->cols();
  }
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data() + r * cols;
    for (const Tensor* p : parts) {
      const auto src = p->row_span(r);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return out;
}

Tensor slice_columns(const Tensor& t, std::size_t start, std::size_t count) {
  if (start + count > t.cols()) {
    throw std::invalid_argument("slice_columns: range [" + std::to_string(start) + "," +
                                std::to_string(start + count) + ") exceeds " +
                                std::to_string(t.cols()) + " columns");
  }
  Tensor out(t.rows(), count);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto src = t.row_span(r).subspan(start, count);
    std::copy(src.begin(), src.end(), out.row_span(r).begin());
  }
  return out;
}

Tensor select_rows(const Tensor& t, std::span<const std::size_t> rows) {
  Tensor out(rows.size(), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.rows()) throw std::out_of_range("select_rows: row index out of range");
    const auto src = t.row_span(rows[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

}  // namespace macflow
