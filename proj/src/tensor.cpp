#include "fisale/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace fisale {

std::size_t shape_product(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto extent : shape_) {
    if (extent == 0) throw DimensionError("tensor extents must be positive");
  }
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto extent : shape_) {
    if (extent == 0) throw DimensionError("tensor extents must be positive");
  }
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out, bool transpose_a,
                       bool transpose_b) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  if (out.rows() != m || out.cols() != n) throw DimensionError("matmul output shape mismatch");

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ConstMap = Eigen::Map<const Mat>;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  const ConstMap ma(a.data().data(), ei(a.rows()), ei(a.cols()));
  const ConstMap mb(b.data().data(), ei(b.rows()), ei(b.cols()));
  Eigen::Map<Mat> mo(out.data().data(), ei(m), ei(n));
  if (m == 0 || n == 0 || k == 0) return;
  if (transpose_a && transpose_b)
    mo.noalias() += ma.transpose() * mb.transpose();
  else if (transpose_a)
    mo.noalias() += ma.transpose() * mb;
  else if (transpose_b)
    mo.noalias() += ma * mb.transpose();
  else
    mo.noalias() += ma * mb;
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  Tensor out({m, n});
  matmul_accumulate(a, b, out, transpose_a, transpose_b);
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1) throw DimensionError("softmax axis must be 0 or 1");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  Tensor out(x.shape());
  if (axis == 1) {
    for (std::size_t i = 0; i < r; ++i) {
      double peak = x(i, 0);
      for (std::size_t j = 1; j < c; ++j) peak = std::max(peak, x(i, j));
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        out(i, j) = std::exp(x(i, j) - peak);
        total += out(i, j);
      }
      for (std::size_t j = 0; j < c; ++j) out(i, j) /= total;
    }
    return out;
  }
  for (std::size_t j = 0; j < c; ++j) {
    double peak = x(0, j);
    for (std::size_t i = 1; i < r; ++i) peak = std::max(peak, x(i, j));
    double total = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      out(i, j) = std::exp(x(i, j) - peak);
      total += out(i, j);
    }
    for (std::size_t i = 0; i < r; ++i) out(i, j) /= total;
  }
  return out;
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.rows()) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) +
                         " does not match weight " + shape_string(weight.shape()));
  }
  if (bias.size() != weight.cols()) throw DimensionError("linear: bias width mismatch");
  Tensor out({x.rows(), weight.cols()});
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = bias[j];
  matmul_accumulate(x, weight, out, false, false);
  return out;
}

Tensor pairwise_sq_distances(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw DimensionError("pairwise distance: dimension mismatch");
  const std::size_t d = a.cols(), na = a.rows(), nb = b.rows();
  Tensor out({na, nb});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < na; ++i) {
    const double* ai = pa + i * d;
    for (std::size_t j = 0; j < nb; ++j) {
      const double* bj = pb + j * d;
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = ai[c] - bj[c];
        acc += diff * diff;
      }
      po[i * nb + j] = acc;
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace fisale
