#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fisale {

using Shape = std::vector<std::size_t>;

/// Raised when operand extents do not conform.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a persisted file does not match its declared layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a value becomes NaN/Inf or an iteration fails to converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles.
///
/// Rank-1 tensors behave as a single row wherever a matrix view is needed,
/// so a bias of shape {n} and one of shape {1, n} are interchangeable.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::initializer_list<double> values);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Matrix view: leading extent (1 for rank-1).
  std::size_t rows() const noexcept {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? 1 : shape_[0];
  }
  /// Matrix view: product of trailing extents.
  std::size_t cols() const noexcept {
    if (shape_.empty()) return 0;
    return shape_.size() == 1 ? shape_[0] : (shape_[0] ? data_.size() / shape_[0] : 0);
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool all_finite() const noexcept;
  void fill(double value) noexcept;
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Plain (non-recording) kernels. The autodiff ops are built on these.

/// out = op(a) * op(b), where op transposes when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
/// out += op(a) * op(b); `out` must already have the result shape.
void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out, bool transpose_a,
                       bool transpose_b);
Tensor transpose(const Tensor& a);
/// Numerically stable softmax of a matrix along axis 0 (columns) or 1 (rows).
Tensor softmax(const Tensor& x, int axis);
/// out[i,j] = sum_k x[i,k] W[k,j] + b[j]
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Squared Euclidean distances between the rows of a (M x d) and b (N x d).
Tensor pairwise_sq_distances(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace fisale
