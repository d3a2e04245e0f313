#pragma once

// Synthetic networked observational data with hidden confounding.
//
// Each instance has a latent topic mixture R_i (the hidden confounder). The
// observed features are a bag-of-words sample drawn from that mixture, and the
// observed network is homophilous in R. Edges carry hidden weights that are
// never exposed through the public graph. Treatments and potential outcomes
// are both driven by the instance's own mixture and by the weighted mixture
// of its neighbors, so X and A are only proxies of the true confounder.

#include <cstdint>
#include <vector>

#include "cone/graph.hpp"
#include "cone/rng.hpp"
#include "cone/tensor.hpp"

namespace cone::datagen {

using Index = std::size_t;

struct GenConfig {
  Index n = 500;
  Index n_topics = 20;
  Index vocab = 200;
  Index words_per_doc = 40;
  double avg_degree = 10.0;
  double kappa1 = 1.0;
  double kappa2 = 2.0;
  double noise_std = 0.01;
  double topic_concentration = 0.1;  // Dirichlet prior of R_i
  double word_concentration = 0.05;  // Dirichlet prior of each topic's word distribution
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const GenConfig&) const = default;
};

// Per-entry edge weights aligned with graph.adjacency().targets().
struct HiddenWeights {
  std::vector<double> raw;         // symmetric, Uniform(0.1, 1)
  std::vector<double> normalized;  // each nonempty row sums to 1

  bool operator==(const HiddenWeights&) const = default;
};

struct Centroids {
  std::vector<double> treated;  // one sampled row of R
  std::vector<double> control;  // column mean of R
  Index treated_source = 0;

  bool operator==(const Centroids&) const = default;
};

struct GroundTruth {
  std::vector<double> y0;
  std::vector<double> y1;
  HiddenWeights weights;
  Tensor topics;           // R, n x n_topics
  Centroids centroids;
  Tensor scores;           // p_i^t, n x 2 (column t)
  std::vector<double> treat_prob;  // P(t_i = 1)

  bool operator==(const GroundTruth&) const = default;
};

struct NetworkedDataset {
  Tensor features;  // X, n x vocab
  graph::Graph graph;
  std::vector<int> t;
  std::vector<double> y;
  GroundTruth truth;
  GenConfig config;

  Index size() const { return t.size(); }
  bool operator==(const NetworkedDataset&) const = default;
};

struct TopicSample {
  Tensor mixtures;  // R
  Tensor words;     // phi, n_topics x vocab
  Tensor features;  // X
};

// Rows drawn from a symmetric Dirichlet. Works for small concentrations.
Tensor sample_dirichlet_rows(Index rows, Index dim, double concentration, Rng& rng);

// Empirical word frequencies of `words_per_doc` draws from the mixture
// sum_k R_ik phi_k, per row.
Tensor sample_features(const Tensor& mixtures, const Tensor& words, Index words_per_doc, Rng& rng);

TopicSample sample_topics_and_features(const GenConfig& cfg);

// Scale c such that the expected mean degree under p_ij = min(1, c R_i.R_j)
// equals the target; capped when the target is unreachable.
double calibrate_edge_scale(const Tensor& mixtures, double avg_degree);
graph::Graph sample_network(const Tensor& mixtures, const GenConfig& cfg);

HiddenWeights sample_hidden_weights(const graph::Graph& g, std::uint64_t seed);
// Dense view of the hidden weights, for tests and inspection.
double hidden_weight(const graph::Graph& g, const std::vector<double>& entries, Index i, Index j);

Centroids select_centroids(const Tensor& mixtures, std::uint64_t seed);

Tensor confounder_scores(const Tensor& mixtures, const graph::Graph& g, const HiddenWeights& w,
                         const Centroids& c, double kappa1, double kappa2);

double treatment_probability(double score_treated, double score_control);
std::vector<int> sample_treatments(const Tensor& scores, std::uint64_t seed);

struct PotentialOutcomes {
  std::vector<double> y0;
  std::vector<double> y1;
  double raw_mean = 0.0;
  double raw_std = 0.0;
};

// Throws DataError when the pooled raw outcomes have zero spread.
PotentialOutcomes generate_outcomes(const Tensor& scores, double noise_std, std::uint64_t seed);

NetworkedDataset make_dataset(const GenConfig& cfg);

}  // namespace cone::datagen
