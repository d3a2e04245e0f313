#include "cone/tensor.hpp"

#include "cone/error.hpp"

namespace cone {

Tensor::Tensor(Index rows, Index cols, double fill)
    : m_(Matrix::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), fill)) {}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = rows.size();
  const Index c = r == 0 ? 0 : rows.begin()->size();
  Tensor t(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Tensor");
    Index j = 0;
    for (double v : row) t(i, j++) = v;
    ++i;
  }
  return t;
}

Tensor Tensor::column(std::span<const double> values) {
  Tensor t(values.size(), 1);
  for (Index i = 0; i < values.size(); ++i) t(i, 0) = values[i];
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a tensor with " + std::to_string(size()) + " elements");
  return m_(0, 0);
}

}  // namespace cone
