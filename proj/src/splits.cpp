#include "cone/splits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cone/error.hpp"
#include "cone/rng.hpp"

namespace cone {

Splits make_splits(std::size_t n, double train_frac, double val_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0)
    throw ConfigError("split fractions must satisfy train > 0, val >= 0, train + val < 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(n)));
  if (n_train + n_val >= n) throw ConfigError("split leaves no test instances");
  Splits s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Tensor take_rows(const Tensor& m, std::span<const std::size_t> idx) {
  Tensor out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m.rows()) throw ShapeError("take_rows: index out of range");
    out.map().row(r) = m.mat().row(idx[r]);
  }
  return out;
}

}  // namespace cone
