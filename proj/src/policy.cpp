#include "cone/policy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cone/error.hpp"
#include "cone/rng.hpp"

namespace cone::policy {

Policy::Policy(std::vector<double> own_weights, std::vector<double> neighbor_weights,
               std::uint64_t seed)
    : seed_(seed) {
  if (own_weights.size() != neighbor_weights.size())
    throw ShapeError("Policy: own/neighbor weight dimensions differ");
  own_[0] = own_weights;
  neighbor_[0] = neighbor_weights;
  for (double& w : own_[0]) w = -w;
  for (double& w : neighbor_[0]) w = -w;
  own_[1] = std::move(own_weights);
  neighbor_[1] = std::move(neighbor_weights);
}

Policy sample_policy(Index dim, std::uint64_t seed) {
  if (dim < 1) throw ShapeError("sample_policy: dimension must be >= 1");
  Rng rng = make_rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> psi(dim), delta(dim);
  for (double& w : psi) w = coin(rng) ? 1.0 : -1.0;
  for (double& w : delta) w = coin(rng) ? 1.0 : -1.0;
  return Policy(std::move(psi), std::move(delta), seed);
}

PolicyMatrix policy_probs(const Policy& p, const Tensor& features, const graph::Graph& g) {
  const Index n = features.rows();
  if (features.cols() != p.dim()) throw ShapeError("policy_probs: feature dimension mismatch");
  if (g.num_nodes() != n) throw ShapeError("policy_probs: graph size mismatch");

  Matrix weights(static_cast<Eigen::Index>(p.dim()), 4);
  for (int t = 0; t < 2; ++t)
    for (Index k = 0; k < p.dim(); ++k) {
      weights(k, t) = p.own(t)[k];
      weights(k, 2 + t) = p.neighbor(t)[k];
    }
  const Matrix proj = features.mat() * weights;  // own logits | per-node neighbor contributions

  PolicyMatrix pi(n, 2);
  for (Index i = 0; i < n; ++i) {
    double logit[2] = {proj(i, 0), proj(i, 1)};
    auto nb = g.neighbors(i);
    if (!nb.empty()) {
      double s0 = 0.0, s1 = 0.0;
      for (Index j : nb) {
        s0 += proj(j, 2);
        s1 += proj(j, 3);
      }
      logit[0] += s0 / static_cast<double>(nb.size());
      logit[1] += s1 / static_cast<double>(nb.size());
    }
    const double m = std::max(logit[0], logit[1]);
    const double e0 = std::exp(logit[0] - m), e1 = std::exp(logit[1] - m);
    pi(i, 0) = e0 / (e0 + e1);
    pi(i, 1) = e1 / (e0 + e1);
  }
  return pi;
}

double true_utility(const PolicyMatrix& pi, std::span<const double> y0, std::span<const double> y1,
                    std::span<const Index> idx) {
  if (idx.empty()) throw DataError("true_utility: empty index set");
  if (pi.cols() != 2 || y0.size() != pi.rows() || y1.size() != pi.rows())
    throw ShapeError("true_utility: size mismatch");
  double total = 0.0;
  for (Index i : idx) {
    if (i >= pi.rows()) throw ShapeError("true_utility: index out of range");
    total += pi(i, 0) * y0[i] + pi(i, 1) * y1[i];
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace cone::policy
