#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cone/datagen.hpp"
#include "cone/error.hpp"
#include "cone/policy.hpp"

using namespace cone;
using namespace cone::policy;
using doctest::Approx;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(const std::vector<double>& w, std::span<const double> x) {
  return std::inner_product(w.begin(), w.end(), x.begin(), 0.0);
}

}  // namespace

TEST_CASE("sampled weights are Rademacher with negated control arm") {
  const auto p = sample_policy(64, 5);
  CHECK(p.dim() == 64);
  for (Index j = 0; j < 64; ++j) {
    CHECK(std::abs(p.own(1)[j]) == 1.0);
    CHECK(std::abs(p.neighbor(1)[j]) == 1.0);
    CHECK(p.own(0)[j] + p.own(1)[j] == 0.0);
    CHECK(p.neighbor(0)[j] + p.neighbor(1)[j] == 0.0);
  }
  const auto q = sample_policy(64, 5);
  CHECK(q.own(1) == p.own(1));
  CHECK(q.neighbor(1) == p.neighbor(1));
  CHECK_THROWS_AS(sample_policy(0, 1), ShapeError);
}

TEST_CASE("zero features give a uniform assignment") {
  const auto p = sample_policy(3, 1);
  const auto g = graph::build_graph(2, std::vector<graph::Edge>{{0, 1}});
  const auto pi = policy_probs(p, Tensor(2, 3), g);
  for (Index i = 0; i < 2; ++i) {
    CHECK(pi(i, 0) == 0.5);
    CHECK(pi(i, 1) == 0.5);
  }
}

TEST_CASE("two-node hand example") {
  const Policy p({1.0, -1.0}, {-1.0, -1.0});
  const auto g = graph::build_graph(3, std::vector<graph::Edge>{{0, 1}});
  const Tensor x = Tensor::from_rows({{0.3, 0.7}, {0.9, 0.1}, {0.5, 0.5}});
  const auto pi = policy_probs(p, x, g);
  // Node 0: own = 0.3 - 0.7 = -0.4, neighbor = -(0.9 + 0.1) = -1 -> logit1 = -1.4, logit0 = 1.4.
  const double p0 = std::exp(-1.4) / (std::exp(-1.4) + std::exp(1.4));
  CHECK(std::abs(pi(0, 1) - p0) < 1e-12);
  // Node 1: own = 0.8, neighbor = -1.0 -> logit1 = -0.2.
  CHECK(std::abs(pi(1, 1) - std::exp(-0.2) / (std::exp(-0.2) + std::exp(0.2))) < 1e-12);
  // Node 2 is isolated: only the own term, 0.5 - 0.5 = 0.
  CHECK(std::abs(pi(2, 1) - 0.5) < 1e-12);
}

TEST_CASE("probabilities follow the two-arm sigmoid identity") {
  datagen::GenConfig cfg;
  cfg.n = 150;
  cfg.seed = 3;
  const auto ds = datagen::make_dataset(cfg);
  const auto p = sample_policy(ds.features.cols(), 9);
  const auto pi = policy_probs(p, ds.features, ds.graph);
  for (Index i = 0; i < ds.size(); ++i) {
    CHECK(std::abs(pi(i, 0) + pi(i, 1) - 1.0) < 1e-12);
    CHECK(pi(i, 1) > 0.0);
    CHECK(pi(i, 1) < 1.0);
    double nb = 0.0;
    for (Index j : ds.graph.neighbors(i)) nb += dot(p.neighbor(1), ds.features.row(j));
    if (ds.graph.degree(i) > 0) nb /= ds.graph.degree(i);
    const double logit = dot(p.own(1), ds.features.row(i)) + nb;
    CHECK(std::abs(pi(i, 1) - sigmoid(2.0 * logit)) < 1e-12);
  }
}

TEST_CASE("true utility") {
  const std::vector<double> y0{0, 1, 2}, y1{1, 1, 1};
  const std::vector<Index> all{0, 1, 2};
  const Tensor pi = Tensor::from_rows({{0.2, 0.8}, {0.5, 0.5}, {1.0, 0.0}});
  CHECK(std::abs(true_utility(pi, y0, y1, all) - 3.8 / 3.0) < 1e-12);

  Tensor treat_all(3, 2);
  for (Index i = 0; i < 3; ++i) treat_all(i, 1) = 1.0;
  CHECK(true_utility(treat_all, y0, y1, all) == Approx(1.0));

  const Tensor uniform(3, 2, 0.5);
  CHECK(true_utility(uniform, y0, y1, all) == Approx((0 + 1 + 2 + 3) / 6.0));
  CHECK(true_utility(pi, y0, y1, std::vector<Index>{2}) == Approx(2.0));
  CHECK_THROWS_AS(true_utility(pi, y0, y1, std::vector<Index>{}), DataError);
}

TEST_CASE("utility is affine equivariant and bounded by the outcomes") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nrm;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 1 + rng() % 30;
    std::vector<double> y0(n), y1(n), s0(n), s1(n);
    Tensor pi(n, 2);
    std::vector<Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    double lo = 1e300, hi = -1e300;
    const double c = nrm(rng) * 10;
    for (Index i = 0; i < n; ++i) {
      y0[i] = nrm(rng);
      y1[i] = nrm(rng);
      s0[i] = y0[i] + c;
      s1[i] = y1[i] + c;
      pi(i, 1) = u(rng);
      pi(i, 0) = 1.0 - pi(i, 1);
      lo = std::min({lo, y0[i], y1[i]});
      hi = std::max({hi, y0[i], y1[i]});
    }
    const double tau = true_utility(pi, y0, y1, idx);
    CHECK(std::abs(true_utility(pi, s0, s1, idx) - (tau + c)) < 1e-9);
    CHECK(tau >= lo - 1e-12);
    CHECK(tau <= hi + 1e-12);
  }
}
