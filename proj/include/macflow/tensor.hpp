#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace macflow {

// Dense row-major tensor of doubles. Most of the library treats tensors as
// matrices: rows() is the product of all leading dimensions and cols() is the
// trailing dimension.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row_span(std::size_t r);
  std::span<const double> row_span(std::size_t r) const;
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  // Scalar value of a 1-element tensor.
  double item() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  void fill(double value);

  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_{0, 0};
  std::vector<double> data_;
};

// Concatenate matrices along columns; all inputs must share the row count.
Tensor concat_columns(std::span<const Tensor* const> parts);
Tensor slice_columns(const Tensor& t, std::size_t start, std::size_t count);
Tensor select_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace macflow
