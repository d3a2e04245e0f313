#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cone/graph.hpp"
#include "cone/tensor.hpp"

namespace cone::policy {

using Index = std::size_t;

// Random-weight treatment assignment function over (features, network).
// Arm-0 weights are the exact negation of arm-1 weights.
class Policy {
 public:
  Policy(std::vector<double> own_weights, std::vector<double> neighbor_weights,
         std::uint64_t seed = 0);

  Index dim() const { return own_[1].size(); }
  // psi^t: weights on the instance's own features.
  const std::vector<double>& own(int arm) const { return own_.at(arm); }
  // delta^t: weights on the neighbor-mean features.
  const std::vector<double>& neighbor(int arm) const { return neighbor_.at(arm); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::array<std::vector<double>, 2> own_;
  std::array<std::vector<double>, 2> neighbor_;
  std::uint64_t seed_;
};

// n x 2 matrix, entry (i, t) = probability that instance i is assigned t.
using PolicyMatrix = Tensor;

// psi^1, delta^1 with i.i.d. entries in {-1, +1}.
Policy sample_policy(Index dim, std::uint64_t seed);

// Row softmax of psi^t . x_i + mean_{j in N(i)} delta^t . x_j. The neighbor
// term is zero for isolated nodes.
PolicyMatrix policy_probs(const Policy& p, const Tensor& features, const graph::Graph& g);

// Mean over idx of sum_t Pi[i][t] * y_i(t).
double true_utility(const PolicyMatrix& pi, std::span<const double> y0, std::span<const double> y1,
                    std::span<const Index> idx);

}  // namespace cone::policy
