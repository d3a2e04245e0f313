#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cone/datagen.hpp"
#include "cone/error.hpp"
#include "cone/estimators.hpp"
#include "cone/splits.hpp"

using namespace cone;
using namespace cone::datagen;
using doctest::Approx;

namespace {

double row_sum(const Tensor& t, Index r) {
  double s = 0.0;
  for (double v : t.row(r)) s += v;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_dataset_invariants(const NetworkedDataset& ds) {
  const Index n = ds.size();
  const auto& g = ds.graph;
  const auto& adj = g.adjacency();
  for (Index i = 0; i < n; ++i) {
    REQUIRE(ds.y[i] == (ds.t[i] ? ds.truth.y1[i] : ds.truth.y0[i]));
    CHECK(std::abs(row_sum(ds.truth.topics, i) - 1.0) < 1e-12);
    double wsum = 0.0;
    for (Index e = adj.offsets()[i]; e < adj.offsets()[i + 1]; ++e) {
      CHECK(ds.truth.weights.normalized[e] > 0.0);
      wsum += ds.truth.weights.normalized[e];
    }
    if (g.degree(i) > 0) CHECK(std::abs(wsum - 1.0) < 1e-12);
  }
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) sum += ds.truth.y0[i] + ds.truth.y1[i];
  const double mean = sum / (2.0 * n);
  double ss = 0.0;
  for (Index i = 0; i < n; ++i)
    ss += (ds.truth.y0[i] - mean) * (ds.truth.y0[i] - mean) + (ds.truth.y1[i] - mean) * (ds.truth.y1[i] - mean);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(ss / (2.0 * n)) - 1.0) < 1e-9);
}

// Held-out expected Bernoulli log-likelihood of a logistic model fitted to the
// true assignment probabilities (soft labels). Sampled treatments carry too
// little signal here: P(t = 1) stays within a few points of 0.5 at kappa ~ 1.
double heldout_loglik(const Tensor& z, const std::vector<double>& q, const Splits& s) {
  const Index d = z.cols() + 1;
  auto design = [&](Index i) {
    Vector x(d);
    x.head(d - 1) = z.mat().row(i).transpose();
    x(d - 1) = 1.0;
    return x;
  };
  const double l2 = 1e-4;
  Vector w = Vector::Zero(d);
  for (int it = 0; it < 50; ++it) {
    Vector g = Vector::Zero(d);
    Matrix h = Matrix::Zero(d, d);
    for (Index i : s.train) {
      const Vector x = design(i);
      const double p = 1.0 / (1.0 + std::exp(-x.dot(w)));
      g += (q[i] - p) * x;
      h += p * (1 - p) * x * x.transpose();
    }
    g /= static_cast<double>(s.train.size());
    h /= static_cast<double>(s.train.size());
    g.head(d - 1) -= l2 * w.head(d - 1);
    h.diagonal().head(d - 1).array() += l2;
    w += h.ldlt().solve(g);
    if (g.norm() < 1e-10) break;
  }
  double ll = 0.0;
  for (Index i : s.test) {
    const double p = 1.0 / (1.0 + std::exp(-design(i).dot(w)));
    ll += q[i] * std::log(p) + (1.0 - q[i]) * std::log(1.0 - p);
  }
  return ll / s.test.size();
}

}  // namespace

TEST_CASE("topic mixtures and features") {
  GenConfig cfg;
  cfg.n = 120;
  cfg.seed = 4;
  const auto s = sample_topics_and_features(cfg);
  for (Index i = 0; i < cfg.n; ++i) {
    CHECK(std::abs(row_sum(s.mixtures, i) - 1.0) < 1e-12);
    CHECK(std::abs(row_sum(s.features, i) - 1.0) < 1e-12);
    Index nz = 0;
    for (double v : s.features.row(i)) {
      CHECK(v >= 0.0);
      nz += v > 0.0;
    }
    CHECK(nz <= cfg.words_per_doc);
  }
  for (Index k = 0; k < cfg.n_topics; ++k) CHECK(std::abs(row_sum(s.words, k) - 1.0) < 1e-12);
}

TEST_CASE("features converge to mixtures with identity topics") {
  Rng rng = make_rng(2);
  const Index k = 5;
  const Tensor r = sample_dirichlet_rows(8, k, 0.1, rng);
  Tensor phi(k, k);
  for (Index i = 0; i < k; ++i) phi(i, i) = 1.0;
  const Tensor x = sample_features(r, phi, 100000, rng);
  for (Index i = 0; i < 8; ++i) {
    double l1 = 0.0;
    for (Index j = 0; j < k; ++j) l1 += std::abs(x(i, j) - r(i, j));
    CHECK(l1 < 0.02);
  }
}

TEST_CASE("network sampling") {
  GenConfig cfg;
  cfg.seed = 1;
  const auto topics = sample_topics_and_features(cfg);

  SUBCASE("zero target degree gives no edges") {
    GenConfig c0 = cfg;
    c0.avg_degree = 0.0;
    CHECK(calibrate_edge_scale(topics.mixtures, 0.0) == 0.0);
    CHECK(sample_network(topics.mixtures, c0).num_edges() == 0);
  }

  SUBCASE("realized mean degree tracks the target") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GenConfig c = cfg;
      c.seed = seed;
      const auto t = sample_topics_and_features(c);
      const auto g = sample_network(t.mixtures, c);
      const double mean_degree = 2.0 * g.num_edges() / c.n;
      CHECK(mean_degree > 0.75 * c.avg_degree);
      CHECK(mean_degree < 1.25 * c.avg_degree);
    }
  }

  SUBCASE("orthogonal mixtures never connect") {
    Tensor r(6, 3);
    for (Index i = 0; i < 6; ++i) r(i, i % 2) = 1.0;  // two disjoint groups
    GenConfig c;
    c.n = 6;
    c.n_topics = 3;
    c.avg_degree = 2.0;
    const auto g = sample_network(r, c);
    for (const auto& [a, b] : g.edges()) CHECK(a % 2 == b % 2);
  }

  SUBCASE("identical mixtures still give a valid graph") {
    Tensor r(10, 3, 1.0 / 3.0);
    GenConfig c;
    c.n = 10;
    c.n_topics = 3;
    c.avg_degree = 4.0;
    const auto g = sample_network(r, c);
    CHECK(g.num_nodes() == 10);
    CHECK(sample_network(r, c) == g);
  }
}

TEST_CASE("hidden weights") {
  GenConfig cfg;
  cfg.n = 200;
  cfg.seed = 8;
  const auto t = sample_topics_and_features(cfg);
  const auto g = sample_network(t.mixtures, cfg);
  const auto w = sample_hidden_weights(g, 8);
  REQUIRE(w.raw.size() == g.adjacency().num_entries());
  for (double v : w.raw) {
    CHECK(v >= 0.1);
    CHECK(v < 1.0);
  }
  for (const auto& [a, b] : g.edges()) {
    CHECK(hidden_weight(g, w.raw, a, b) == hidden_weight(g, w.raw, b, a));
    CHECK(hidden_weight(g, w.raw, a, b) > 0.0);
  }
  for (Index i = 0; i < g.num_nodes(); ++i) {
    if (g.degree(i) == 0) continue;
    double s = 0.0;
    for (Index j : g.neighbors(i)) s += hidden_weight(g, w.normalized, i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK(hidden_weight(g, w.raw, 0, 0) == 0.0);
}

TEST_CASE("centroids") {
  Rng rng = make_rng(3);
  const Tensor one = sample_dirichlet_rows(1, 4, 0.1, rng);
  const auto c1 = select_centroids(one, 5);
  CHECK(c1.treated == std::vector<double>(one.row(0).begin(), one.row(0).end()));
  CHECK(c1.control == c1.treated);

  const Tensor r = sample_dirichlet_rows(30, 4, 0.1, rng);
  const auto c = select_centroids(r, 5);
  CHECK(std::abs(std::accumulate(c.control.begin(), c.control.end(), 0.0) - 1.0) < 1e-12);
  const auto src = r.row(c.treated_source);
  CHECK(c.treated == std::vector<double>(src.begin(), src.end()));
}

TEST_CASE("confounder scores") {
  SUBCASE("hand-computed two-node path") {
    const Tensor r = Tensor::from_rows({{0.7, 0.3}, {0.2, 0.8}});
    const auto g = graph::build_graph(2, std::vector<graph::Edge>{{0, 1}});
    const auto w = sample_hidden_weights(g, 1);  // one neighbor each: normalized weights are 1
    Centroids c{{0.6, 0.4}, {0.45, 0.55}, 0};
    const Tensor p = confounder_scores(r, g, w, c, 1.5, 2.0);
    // p_0^1 = 1.5 (0.7*0.6 + 0.3*0.4) + 2 (0.2*0.6 + 0.8*0.4)
    CHECK(std::abs(p(0, 1) - (1.5 * 0.54 + 2.0 * 0.44)) < 1e-12);
    CHECK(std::abs(p(0, 0) - (1.5 * (0.7 * 0.45 + 0.3 * 0.55) + 2.0 * (0.2 * 0.45 + 0.8 * 0.55))) < 1e-12);
    CHECK(std::abs(p(1, 1) - (1.5 * 0.44 + 2.0 * 0.54)) < 1e-12);
    CHECK(std::abs(p(1, 0) - (1.5 * (0.2 * 0.45 + 0.8 * 0.55) + 2.0 * (0.7 * 0.45 + 0.3 * 0.55))) < 1e-12);
  }

  SUBCASE("weighted neighbor aggregation") {
    const Tensor r = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}});
    const auto g = graph::build_graph(3, std::vector<graph::Edge>{{0, 1}, {0, 2}});
    const auto w = sample_hidden_weights(g, 2);
    Centroids c{{1.0, 0.0}, {0.0, 1.0}, 0};
    const Tensor p = confounder_scores(r, g, w, c, 0.0, 1.0);
    const double w01 = hidden_weight(g, w.normalized, 0, 1), w02 = hidden_weight(g, w.normalized, 0, 2);
    CHECK(std::abs(p(0, 1) - (w01 * 0.0 + w02 * 0.5)) < 1e-12);
    CHECK(std::abs(p(0, 0) - (w01 * 1.0 + w02 * 0.5)) < 1e-12);
  }

  SUBCASE("no confounding and isolated nodes") {
    GenConfig cfg;
    cfg.n = 80;
    cfg.seed = 6;
    const auto t = sample_topics_and_features(cfg);
    const auto g = sample_network(t.mixtures, cfg);
    const auto w = sample_hidden_weights(g, 6);
    const auto c = select_centroids(t.mixtures, 6);
    const Tensor zero = confounder_scores(t.mixtures, g, w, c, 0.0, 0.0);
    for (Index i = 0; i < cfg.n; ++i) {
      CHECK(zero(i, 0) == 0.0);
      CHECK(treatment_probability(zero(i, 1), zero(i, 0)) == 0.5);
    }
    const auto empty = graph::build_graph(cfg.n, std::vector<graph::Edge>{});
    const Tensor iso = confounder_scores(t.mixtures, empty, sample_hidden_weights(empty, 1), c, 1.3, 2.0);
    for (Index i = 0; i < cfg.n; ++i)
      CHECK(std::abs(iso(i, 1) - 1.3 * dot(t.mixtures.row(i), c.treated)) < 1e-12);
  }
}

TEST_CASE("treatments") {
  CHECK(treatment_probability(0.37, 0.37) == 0.5);
  CHECK(treatment_probability(10.0, 0.0) > 0.9999);

  const Index n = 100000;
  Tensor scores(n, 2);
  for (Index i = 0; i < n; ++i) scores(i, 1) = 0.8;
  const auto t = sample_treatments(scores, 12);
  const double frac = std::accumulate(t.begin(), t.end(), 0.0) / n;
  CHECK(std::abs(frac - treatment_probability(0.8, 0.0)) < 0.01);
  CHECK(sample_treatments(scores, 12) == t);
}

TEST_CASE("outcomes") {
  SUBCASE("degenerate spread") {
    Tensor zero(10, 2);
    CHECK_THROWS_AS(generate_outcomes(zero, 0.0, 1), DataError);
    GenConfig cfg;
    cfg.n = 50;
    cfg.kappa1 = cfg.kappa2 = cfg.noise_std = 0.0;
    CHECK_THROWS_AS(make_dataset(cfg), DataError);
  }

  SUBCASE("noiseless arm gap") {
    Rng rng = make_rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    Tensor p(40, 2);
    for (auto& v : p.values()) v = u(rng);
    const auto o = generate_outcomes(p, 0.0, 3);
    for (Index i = 0; i < 40; ++i)
      CHECK(std::abs((o.y1[i] - o.y0[i]) - (p(i, 1) - p(i, 0)) / o.raw_std) < 1e-12);
  }
}

TEST_CASE("make_dataset") {
  GenConfig cfg;
  cfg.n = 300;
  cfg.seed = 21;
  const auto ds = make_dataset(cfg);
  check_dataset_invariants(ds);
  CHECK(make_dataset(cfg) == ds);

  GenConfig weak = cfg;
  weak.kappa2 = 1.0;
  const auto ds1 = make_dataset(weak);
  double gap2 = 0.0, gap1 = 0.0;
  for (Index i = 0; i < cfg.n; ++i) {
    gap2 += std::abs(ds.truth.scores(i, 1) - ds.truth.scores(i, 0));
    gap1 += std::abs(ds1.truth.scores(i, 1) - ds1.truth.scores(i, 0));
  }
  CHECK(gap2 > gap1);
}

TEST_CASE("invariants over random configurations") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    GenConfig cfg;
    cfg.n = 20 + rng() % 60;
    cfg.n_topics = 2 + rng() % 10;
    cfg.vocab = cfg.n_topics + rng() % 40;
    cfg.words_per_doc = 1 + rng() % 50;
    cfg.avg_degree = static_cast<double>(rng() % 8);
    cfg.kappa1 = static_cast<double>(rng() % 300) / 100.0;
    cfg.kappa2 = static_cast<double>(rng() % 300) / 100.0;
    cfg.noise_std = 0.01;
    cfg.seed = rng();
    INFO("trial " << trial);
    check_dataset_invariants(make_dataset(cfg));
  }
}

TEST_CASE("features are a lossy proxy of the confounder") {
  for (double k2 : {1.0, 2.0}) {
    GenConfig cfg;
    cfg.n = 5000;
    cfg.seed = 17;
    cfg.kappa2 = k2;
    const auto ds = make_dataset(cfg);
    const auto s = make_splits(ds.size(), 0.5, 0.0, 3);
    const double on_x = heldout_loglik(ds.features, ds.truth.treat_prob, s);
    const double on_r = heldout_loglik(ds.truth.topics, ds.truth.treat_prob, s);
    INFO("kappa2 " << k2 << ": X " << on_x << " R " << on_r);
    CHECK(on_x < on_r);
  }
}

TEST_CASE("config validation") {
  GenConfig cfg;
  cfg.n_topics = cfg.vocab + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.kappa2 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.avg_degree = static_cast<double>(cfg.n);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
