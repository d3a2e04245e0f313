#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cone/tensor.hpp"

namespace cone {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Random partition of [0, n) with the given train/validation fractions; the
// remainder goes to test. Each part is sorted.
Splits make_splits(std::size_t n, double train_frac, double val_frac, std::uint64_t seed);

Tensor take_rows(const Tensor& m, std::span<const std::size_t> idx);

template <class T>
std::vector<T> take(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

template <class T>
std::vector<T> take(const std::vector<T>& v, std::span<const std::size_t> idx) {
  return take(std::span<const T>(v), idx);
}

}  // namespace cone
