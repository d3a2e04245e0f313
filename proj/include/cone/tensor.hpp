#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace cone {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Dense row-major matrix of doubles with a fixed shape. Elementwise access is
// mutable; the shape is not.
class Tensor {
 public:
  using Index = std::size_t;

  Tensor() = default;
  Tensor(Index rows, Index cols, double fill = 0.0);
  explicit Tensor(Matrix m) : m_(std::move(m)) {}

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor column(std::span<const double> values);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  Index rows() const { return static_cast<Index>(m_.rows()); }
  Index cols() const { return static_cast<Index>(m_.cols()); }
  Index size() const { return static_cast<Index>(m_.size()); }
  bool same_shape(const Tensor& o) const { return rows() == o.rows() && cols() == o.cols(); }

  double& operator()(Index r, Index c) { return m_(r, c); }
  double operator()(Index r, Index c) const { return m_(r, c); }
  double item() const;

  std::span<double> values() { return {m_.data(), size()}; }
  std::span<const double> values() const { return {m_.data(), size()}; }
  std::span<const double> row(Index r) const { return {m_.data() + r * cols(), cols()}; }

  const Matrix& mat() const { return m_; }
  // Writable view that cannot change the shape.
  Eigen::Map<Matrix> map() { return {m_.data(), m_.rows(), m_.cols()}; }

  bool all_finite() const { return m_.allFinite(); }

  bool operator==(const Tensor& o) const { return same_shape(o) && m_ == o.m_; }

 private:
  Matrix m_;
};

}  // namespace cone
