#include "cone/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "cone/error.hpp"

namespace cone::datagen {

namespace {

enum Stream : std::uint64_t {
  kTopics = 1,
  kNetwork = 2,
  kWeights = 3,
  kCentroids = 4,
  kTreatments = 5,
  kOutcomes = 6,
};

}  // namespace

void GenConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("gen: " + m); };
  if (n < 1) fail("n must be >= 1");
  if (n_topics < 1) fail("n_topics must be >= 1");
  if (n_topics > vocab) fail("n_topics must not exceed vocab");
  if (words_per_doc < 1) fail("words_per_doc must be >= 1");
  if (!(avg_degree >= 0.0) || !(avg_degree < static_cast<double>(n)))
    fail("avg_degree must lie in [0, n)");
  if (!(kappa1 >= 0.0) || !(kappa2 >= 0.0)) fail("kappa1 and kappa2 must be >= 0");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(topic_concentration > 0.0) || !(word_concentration > 0.0))
    fail("Dirichlet concentrations must be > 0");
}

Tensor sample_dirichlet_rows(Index rows, Index dim, double concentration, Rng& rng) {
  // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space so that tiny
  // concentrations do not underflow to an all-zero row.
  std::gamma_distribution<double> gamma(concentration + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Tensor out(rows, dim);
  std::vector<double> logs(dim);
  for (Index r = 0; r < rows; ++r) {
    for (Index k = 0; k < dim; ++k) {
      double u = unif(rng);
      while (u <= 0.0) u = unif(rng);
      logs[k] = std::log(gamma(rng)) + std::log(u) / concentration;
    }
    const double m = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    for (Index k = 0; k < dim; ++k) total += (out(r, k) = std::exp(logs[k] - m));
    for (Index k = 0; k < dim; ++k) out(r, k) /= total;
  }
  return out;
}

Tensor sample_features(const Tensor& mixtures, const Tensor& words, Index words_per_doc, Rng& rng) {
  if (mixtures.cols() != words.rows()) throw ShapeError("sample_features: topic count mismatch");
  const Index n = mixtures.rows(), vocab = words.cols();
  Tensor x(n, vocab);
  const Matrix word_probs = mixtures.mat() * words.mat();
  std::vector<double> p(vocab);
  for (Index i = 0; i < n; ++i) {
    for (Index v = 0; v < vocab; ++v) p[v] = std::max(0.0, word_probs(i, v));
    std::discrete_distribution<Index> draw(p.begin(), p.end());
    for (Index w = 0; w < words_per_doc; ++w) x(i, draw(rng)) += 1.0;
    for (Index v = 0; v < vocab; ++v) x(i, v) /= static_cast<double>(words_per_doc);
  }
  return x;
}

TopicSample sample_topics_and_features(const GenConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(derive_seed(cfg.seed, kTopics));
  TopicSample s;
  s.mixtures = sample_dirichlet_rows(cfg.n, cfg.n_topics, cfg.topic_concentration, rng);
  s.words = sample_dirichlet_rows(cfg.n_topics, cfg.vocab, cfg.word_concentration, rng);
  s.features = sample_features(s.mixtures, s.words, cfg.words_per_doc, rng);
  return s;
}

namespace {

std::vector<double> pair_similarities(const Tensor& r) {
  const Index n = r.rows();
  std::vector<double> s;
  s.reserve(n * (n - 1) / 2);
  const Matrix gram = r.mat() * r.mat().transpose();
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) s.push_back(std::max(0.0, gram(i, j)));
  return s;
}

}  // namespace

double calibrate_edge_scale(const Tensor& mixtures, double avg_degree) {
  const Index n = mixtures.rows();
  if (n < 2 || avg_degree <= 0.0) return 0.0;
  std::vector<double> s = pair_similarities(mixtures);
  std::sort(s.begin(), s.end());
  std::vector<double> prefix(s.size() + 1, 0.0);
  for (Index k = 0; k < s.size(); ++k) prefix[k + 1] = prefix[k] + s[k];

  // Expected mean degree: (2/n) * sum_pairs min(1, c s).
  auto expected = [&](double c) {
    const auto cut = std::lower_bound(s.begin(), s.end(), 1.0 / c) - s.begin();
    const double below = c * prefix[cut];
    const double saturated = static_cast<double>(s.size() - cut);
    return 2.0 * (below + saturated) / static_cast<double>(n);
  };

  const auto first_pos = std::upper_bound(s.begin(), s.end(), 0.0);
  if (first_pos == s.end()) return 0.0;
  const double c_max = 1.0 / *first_pos;  // every positive pair saturated
  if (expected(c_max) <= avg_degree) return c_max;

  double lo = 0.0, hi = 1.0;
  while (hi < c_max && expected(hi) < avg_degree) hi *= 2.0;
  hi = std::min(hi, c_max);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < avg_degree ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

graph::Graph sample_network(const Tensor& mixtures, const GenConfig& cfg) {
  const Index n = mixtures.rows();
  const double c = calibrate_edge_scale(mixtures, cfg.avg_degree);
  Rng rng = make_rng(derive_seed(cfg.seed, kNetwork));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<graph::Edge> edges;
  const Matrix gram = mixtures.mat() * mixtures.mat().transpose();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = std::min(1.0, c * std::max(0.0, gram(i, j)));
      // Draw unconditionally so the stream layout does not depend on c.
      const double u = unif(rng);
      if (u < p) edges.emplace_back(i, j);
    }
  }
  return graph::build_graph(n, edges);
}

HiddenWeights sample_hidden_weights(const graph::Graph& g, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, kWeights));
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  const auto& adj = g.adjacency();
  HiddenWeights w;
  w.raw.assign(adj.num_entries(), 0.0);
  for (auto [i, j] : g.edges()) {
    const double v = unif(rng);
    auto nb_i = adj.neighbors(i);
    auto nb_j = adj.neighbors(j);
    w.raw[adj.offsets()[i] + (std::lower_bound(nb_i.begin(), nb_i.end(), j) - nb_i.begin())] = v;
    w.raw[adj.offsets()[j] + (std::lower_bound(nb_j.begin(), nb_j.end(), i) - nb_j.begin())] = v;
  }
  w.normalized = w.raw;
  for (Index i = 0; i < g.num_nodes(); ++i) {
    const Index b = adj.offsets()[i], e = adj.offsets()[i + 1];
    const double total = std::accumulate(w.raw.begin() + b, w.raw.begin() + e, 0.0);
    for (Index k = b; k < e; ++k) w.normalized[k] = w.raw[k] / total;
  }
  return w;
}

double hidden_weight(const graph::Graph& g, const std::vector<double>& entries, Index i, Index j) {
  auto nb = g.neighbors(i);
  auto it = std::lower_bound(nb.begin(), nb.end(), j);
  if (it == nb.end() || *it != j) return 0.0;
  return entries.at(g.adjacency().offsets()[i] + (it - nb.begin()));
}

Centroids select_centroids(const Tensor& mixtures, std::uint64_t seed) {
  const Index n = mixtures.rows();
  if (n == 0) throw DataError("select_centroids: no instances");
  Rng rng = make_rng(derive_seed(seed, kCentroids));
  std::uniform_int_distribution<Index> pick(0, n - 1);
  Centroids c;
  c.treated_source = pick(rng);
  auto row = mixtures.row(c.treated_source);
  c.treated.assign(row.begin(), row.end());
  const Vector mean = mixtures.mat().colwise().mean().transpose();
  c.control.assign(mean.data(), mean.data() + mean.size());
  return c;
}

Tensor confounder_scores(const Tensor& mixtures, const graph::Graph& g, const HiddenWeights& w,
                         const Centroids& c, double kappa1, double kappa2) {
  const Index n = mixtures.rows(), k = mixtures.cols();
  if (g.num_nodes() != n) throw ShapeError("confounder_scores: graph/mixture size mismatch");
  if (c.treated.size() != k || c.control.size() != k)
    throw ShapeError("confounder_scores: centroid dimension mismatch");
  if (w.normalized.size() != g.adjacency().num_entries())
    throw ShapeError("confounder_scores: weights not aligned with graph");
  const Eigen::Map<const Vector> r1(c.treated.data(), static_cast<Eigen::Index>(k));
  const Eigen::Map<const Vector> r0(c.control.data(), static_cast<Eigen::Index>(k));
  const auto& adj = g.adjacency();
  Tensor p(n, 2);
  Vector agg(k);
  for (Index i = 0; i < n; ++i) {
    agg.setZero();
    for (Index e = adj.offsets()[i]; e < adj.offsets()[i + 1]; ++e)
      agg += w.normalized[e] * mixtures.mat().row(adj.targets()[e]).transpose();
    const auto own = mixtures.mat().row(i).transpose();
    p(i, 0) = kappa1 * own.dot(r0) + kappa2 * agg.dot(r0);
    p(i, 1) = kappa1 * own.dot(r1) + kappa2 * agg.dot(r1);
  }
  return p;
}

double treatment_probability(double score_treated, double score_control) {
  const double d = score_treated - score_control;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

std::vector<int> sample_treatments(const Tensor& scores, std::uint64_t seed) {
  if (scores.cols() != 2) throw ShapeError("sample_treatments: scores must have 2 columns");
  if (!scores.all_finite()) throw NumericalError("sample_treatments: non-finite scores");
  Rng rng = make_rng(derive_seed(seed, kTreatments));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> t(scores.rows());
  for (Index i = 0; i < scores.rows(); ++i)
    t[i] = unif(rng) < treatment_probability(scores(i, 1), scores(i, 0)) ? 1 : 0;
  return t;
}

PotentialOutcomes generate_outcomes(const Tensor& scores, double noise_std, std::uint64_t seed) {
  if (scores.cols() != 2) throw ShapeError("generate_outcomes: scores must have 2 columns");
  const Index n = scores.rows();
  Rng rng = make_rng(derive_seed(seed, kOutcomes));
  std::normal_distribution<double> noise(0.0, 1.0);
  PotentialOutcomes o;
  o.y0.resize(n);
  o.y1.resize(n);
  for (Index i = 0; i < n; ++i) {
    o.y0[i] = scores(i, 0) + noise_std * noise(rng);
    o.y1[i] = scores(i, 1) + noise_std * noise(rng);
  }
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) sum += o.y0[i] + o.y1[i];
  const double mu = sum / static_cast<double>(2 * n);
  double ss = 0.0;
  for (Index i = 0; i < n; ++i) ss += (o.y0[i] - mu) * (o.y0[i] - mu) + (o.y1[i] - mu) * (o.y1[i] - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(2 * n));
  if (!(sigma > 0.0)) throw DataError("generate_outcomes: raw outcomes have zero spread");
  for (Index i = 0; i < n; ++i) {
    o.y0[i] = (o.y0[i] - mu) / sigma;
    o.y1[i] = (o.y1[i] - mu) / sigma;
  }
  o.raw_mean = mu;
  o.raw_std = sigma;
  return o;
}

NetworkedDataset make_dataset(const GenConfig& cfg) {
  cfg.validate();
  TopicSample topics = sample_topics_and_features(cfg);
  NetworkedDataset ds;
  ds.config = cfg;
  ds.graph = sample_network(topics.mixtures, cfg);
  ds.truth.weights = sample_hidden_weights(ds.graph, cfg.seed);
  ds.truth.centroids = select_centroids(topics.mixtures, cfg.seed);
  ds.truth.scores = confounder_scores(topics.mixtures, ds.graph, ds.truth.weights,
                                      ds.truth.centroids, cfg.kappa1, cfg.kappa2);
  ds.t = sample_treatments(ds.truth.scores, cfg.seed);
  PotentialOutcomes po = generate_outcomes(ds.truth.scores, cfg.noise_std, cfg.seed);
  ds.truth.y0 = std::move(po.y0);
  ds.truth.y1 = std::move(po.y1);
  ds.truth.treat_prob.resize(cfg.n);
  ds.y.resize(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) {
    ds.truth.treat_prob[i] = treatment_probability(ds.truth.scores(i, 1), ds.truth.scores(i, 0));
    ds.y[i] = ds.t[i] ? ds.truth.y1[i] : ds.truth.y0[i];
  }
  ds.features = std::move(topics.features);
  ds.truth.topics = std::move(topics.mixtures);
  return ds;
}

}  // namespace cone::datagen
