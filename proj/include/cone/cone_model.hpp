#pragma once

// Counterfactual network evaluator.
//
// Two graph-attention branches map (X, A) to partial confounder
// representations: Zt is supervised by the observed treatment through a
// logistic head, Zy by the factual outcome through an MLP head. A critic h
// ties the two together with a Donsker-Varadhan mutual-information bound.
// At inference the concatenation [Zy || Zt] feeds per-arm outcome networks and
// a logistic propensity model, combined in a self-normalized doubly robust
// estimate.
//
// Parameter names:
//   gt.<layer>.W<k>, gt.<layer>.a<k>   treatment branch, head k
//   gy.<layer>.U<k>, gy.<layer>.b<k>   outcome branch, head k
//   fy.W<l>, fy.b<l>                   outcome head
//   ft.v, ft.c                         treatment head
//   h.W<l>, h.b<l>                     critic (the only theta_h tensors)

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cone/autodiff.hpp"
#include "cone/datagen.hpp"
#include "cone/estimators.hpp"
#include "cone/graph.hpp"
#include "cone/nn.hpp"
#include "cone/optim.hpp"
#include "cone/splits.hpp"

namespace cone::model {

using Index = std::size_t;
using ad::Expr;
using ad::ParamStore;

struct ConeConfig {
  Index dim = 32;      // D, per partial representation
  Index heads = 4;     // K
  Index layers = 1;    // stacked GAT layers per branch
  double gamma = 1.0;
  double zeta = 0.01;
  double lr = 1e-3;
  int epochs = 300;
  int patience = 30;
  Index critic_hidden = 64;
  Index outcome_hidden = 32;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  Index head_dim() const { return dim / heads; }
  bool operator==(const ConeConfig&) const = default;
};

// Shared segment layout of N(i) + {i}, built once per graph.
struct AttentionLayout {
  std::shared_ptr<const ad::Segments> segments;
  std::shared_ptr<const std::vector<Index>> sources;
  std::shared_ptr<const std::vector<Index>> targets;

  static AttentionLayout from_graph(const graph::Graph& g);
};

struct GatOutput {
  Expr output;                  // n x (heads * head_dim)
  std::vector<Expr> attention;  // per head, one coefficient per layout entry
};

// One multi-head attention layer. Head k reads parameters
// "<prefix><weight_tag><k>" (in x head_dim) and "<prefix><attn_tag><k>"
// (2*head_dim x 1).
GatOutput gat_layer(const Expr& x, const AttentionLayout& layout, const std::string& prefix,
                    const std::string& weight_tag, const std::string& attn_tag, Index heads,
                    Index head_dim, double leaky_slope = 0.2);

// Spec of the two GAT branches and three heads for a given feature width.
class ConeNetwork {
 public:
  ConeNetwork(const ConeConfig& cfg, Index feature_dim);

  const ConeConfig& config() const { return cfg_; }
  ParamStore init_params(std::uint64_t seed) const;
  // theta_{-h} and theta_h partitions of the parameter names.
  std::set<std::string> main_param_names() const;
  std::set<std::string> critic_param_names() const;

  struct Reps {
    Expr zt;
    Expr zy;
    std::vector<Expr> attention_t;  // last layer, per head
    std::vector<Expr> attention_y;
  };
  Reps representations(const Expr& x, const AttentionLayout& layout) const;

  ad::MlpShape outcome_head() const;
  ad::MlpShape critic() const;

 private:
  ConeConfig cfg_;
  Index feature_dim_;
};

// Mean squared error of the outcome head on rows idx.
Expr outcome_loss(const Expr& zy, std::span<const double> y, std::span<const Index> idx,
                  const ad::MlpShape& head);
// Cross-entropy of sigmoid(Zt v + c) on rows idx; probabilities clamped to
// [1e-12, 1 - 1e-12] inside the logs.
Expr treatment_loss(const Expr& zt, std::span<const int> t, std::span<const Index> idx);
// -mean h(zt_i, zy_i) + log mean exp h(zt_i, zy_perm(i)), i over idx. perm
// must be a permutation of idx.
Expr mi_loss(const Expr& zt, const Expr& zy, std::span<const Index> idx, std::span<const Index> perm,
             const ad::MlpShape& critic);
Expr total_loss(const Expr& ly, const Expr& lt, const Expr& lmi, double gamma, double zeta);
double total_loss(double ly, double lt, double lmi, double gamma, double zeta);

struct PartialReps {
  Tensor zt;
  Tensor zy;
  // [Zy || Zt], n x 2D.
  Tensor concatenated() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double outcome = 0.0;
  double treatment = 0.0;
  double mi = 0.0;
  double val_outcome = 0.0;
};

struct TrainResult {
  ParamStore params;
  PartialReps reps;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// Full-batch training. Representations use the whole graph; losses use
// splits.train; model selection uses the outcome loss on splits.val.
TrainResult train(const datagen::NetworkedDataset& ds, const ConeConfig& cfg, const Splits& splits);

PartialReps compute_representations(const ConeNetwork& net, const ParamStore& params,
                                    const Tensor& features, const graph::Graph& g);

struct InferenceConfig {
  est::MlpRegressorConfig outcome;
  est::LogisticConfig propensity;
  double clip = est::kDefaultClip;
  est::DrWeighting weighting = est::DrWeighting::SNIPS;
};

// Doubly robust estimate on splits.test from a representation Z (n x d):
// per-arm outcome networks fit on train (early stopping on val), logistic
// propensity fit on train. `outcome_override`, when given, replaces the
// outcome networks' n x 2 predictions.
est::EstimateRecord dr_from_representation(const Tensor& z, const datagen::NetworkedDataset& ds,
                                           const Tensor& pi, const Splits& splits,
                                           const InferenceConfig& cfg,
                                           const Tensor* outcome_override = nullptr);

est::EstimateRecord infer_utility(const PartialReps& reps, const datagen::NetworkedDataset& ds,
                                  const Tensor& pi, const Splits& splits, const InferenceConfig& cfg,
                                  const Tensor* outcome_override = nullptr);

// Trains a standalone critic on samples (a_i, b_i) and returns the
// Donsker-Varadhan bound. Used to validate the MI machinery in isolation.
struct MiEstimatorConfig {
  std::vector<Index> hidden{64, 64};
  double lr = 1e-3;
  int steps = 1500;
  int eval_permutations = 20;
  std::uint64_t seed = 0;
};
double estimate_mutual_information(const Tensor& a, const Tensor& b, const MiEstimatorConfig& cfg);

}  // namespace cone::model
