#pragma once

// Counterfactual policy-value estimators on a fixed representation Z:
// direct method, inverse propensity scoring (plain and self-normalized) and
// doubly robust combinations, plus the models they are built from.
//
// Every estimate takes the policy matrix and per-instance arrays over the
// full instance set together with an index subset `idx`; only rows in idx
// enter the average.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cone/optim.hpp"
#include "cone/tensor.hpp"

namespace cone::est {

using Index = std::size_t;

// ---------------------------------------------------------------- propensity

struct LogisticConfig {
  double l2 = 1e-3;          // penalty on weights, not on the intercept
  double tolerance = 1e-6;   // gradient-norm stopping criterion
  int max_iterations = 200;
};

class PropensityModel {
 public:
  PropensityModel() = default;
  PropensityModel(Vector weights, double bias, double grad_norm, int iterations);

  bool fitted() const { return fitted_; }
  // P(t = 1 | z) for every row of Z.
  std::vector<double> predict(const Tensor& z) const;
  const Vector& weights() const { return w_; }
  double bias() const { return b_; }
  double gradient_norm() const { return grad_norm_; }
  int iterations() const { return iterations_; }

 private:
  Vector w_;
  double b_ = 0.0;
  double grad_norm_ = 0.0;
  int iterations_ = 0;
  bool fitted_ = false;
};

// Maximizes the L2-penalized mean Bernoulli log-likelihood by damped Newton
// ascent. Throws DataError when only one arm is present.
PropensityModel fit_propensity(const Tensor& z, std::span<const int> t, const LogisticConfig& cfg = {});

// ---------------------------------------------------------------- outcome

enum class OutcomeVariant { OLS1, OLS2, DMX };
const char* variant_name(OutcomeVariant v);

struct LabeledSample {
  Tensor z;
  std::vector<int> t;
  std::vector<double> y;

  Index size() const { return t.size(); }
};

LabeledSample make_sample(const Tensor& z, std::span<const int> t, std::span<const double> y,
                          std::span<const Index> idx);

struct MlpRegressorConfig {
  std::vector<Index> hidden{64, 64};
  double lr = 1e-3;
  int epochs = 500;
  int patience = 50;  // epochs without validation improvement; only used with a validation set
  std::uint64_t seed = 0;
};

struct OutcomeConfig {
  double ridge = 1e-6;
  MlpRegressorConfig mlp;
};

class OutcomeModel {
 public:
  OutcomeModel() = default;

  OutcomeVariant variant() const { return variant_; }
  bool fitted() const { return fitted_; }
  std::vector<double> predict(const Tensor& z, int arm) const;
  // n x 2 table; column t holds the predicted outcome under treatment t.
  Tensor predict_both(const Tensor& z) const;

  // OLS coefficients: OLS1 uses one vector over [z, t, 1]; OLS2 one per arm
  // over [z, 1].
  const Vector& coefficients(int arm) const { return coef_.at(arm); }

  friend OutcomeModel fit_outcome(const LabeledSample&, OutcomeVariant, const OutcomeConfig&,
                                  const LabeledSample*);

 private:
  OutcomeVariant variant_ = OutcomeVariant::OLS1;
  bool fitted_ = false;
  Index dim_ = 0;
  std::array<Vector, 2> coef_;
  std::array<ad::ParamStore, 2> nets_;
  std::vector<Index> hidden_;
};

// The validation sample drives DM-X early stopping; OLS variants ignore it.
OutcomeModel fit_outcome(const LabeledSample& train, OutcomeVariant variant,
                         const OutcomeConfig& cfg = {}, const LabeledSample* validation = nullptr);

// Per-arm MLP on squared error, used by DM-X and by the representation-based
// inference. Returns the parameters with the best validation loss (or the
// final ones when no validation sample is given).
struct MlpFit {
  ad::ParamStore params;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
};
MlpFit fit_mlp_regressor(const Tensor& z, std::span<const double> y, const MlpRegressorConfig& cfg,
                         const Tensor* z_val = nullptr, std::span<const double> y_val = {});
std::vector<double> predict_mlp(const ad::ParamStore& params, const std::vector<Index>& hidden,
                                const Tensor& z);

// ---------------------------------------------------------------- estimates

enum class DrWeighting { IPS, SNIPS, SNIPSLiteral };

struct WeightDiagnostics {
  double min_weight = 0.0;
  double max_weight = 0.0;
  Index clipped = 0;
};

struct EstimateRecord {
  std::string estimator;
  double tau_hat = 0.0;
  double tau = 0.0;
  WeightDiagnostics diagnostics;
};

constexpr double kDefaultClip = 0.01;

// w_i = Pi[i][t_i] / clip(P(t_i | z_i)), for i in idx (same order as idx).
std::vector<double> ips_weights(const Tensor& pi, std::span<const double> prop_treated,
                                std::span<const int> t, std::span<const Index> idx,
                                double clip, WeightDiagnostics* diag = nullptr);

// Mean over idx of sum_t Pi[i][t] * yhat(i, t); outcomes is n x 2.
double direct_estimate(const Tensor& pi, const Tensor& outcomes, std::span<const Index> idx);
double direct_estimate(const Tensor& pi, const OutcomeModel& model, const Tensor& z,
                       std::span<const Index> idx);

EstimateRecord ips_estimate(const Tensor& pi, std::span<const double> prop_treated,
                            std::span<const int> t, std::span<const double> y,
                            std::span<const Index> idx, double clip = kDefaultClip);
EstimateRecord ips_estimate(const Tensor& pi, const PropensityModel& prop, const Tensor& z,
                            std::span<const int> t, std::span<const double> y,
                            std::span<const Index> idx, double clip = kDefaultClip);

// Ratio form sum w y / sum w.
double snips_from_weights(std::span<const double> w, std::span<const double> y);
EstimateRecord snips_estimate(const Tensor& pi, std::span<const double> prop_treated,
                              std::span<const int> t, std::span<const double> y,
                              std::span<const Index> idx, double clip = kDefaultClip);
EstimateRecord snips_estimate(const Tensor& pi, const PropensityModel& prop, const Tensor& z,
                              std::span<const int> t, std::span<const double> y,
                              std::span<const Index> idx, double clip = kDefaultClip);

// Mean over idx of sum_t Pi yhat(t) + w_i (y_i - yhat(t_i)). IPS uses the raw
// weights; SNIPS rescales them to average 1 over idx; SNIPSLiteral divides
// them by their sum inside the 1/|idx| average.
EstimateRecord dr_estimate(const Tensor& pi, const Tensor& outcomes,
                           std::span<const double> prop_treated, std::span<const int> t,
                           std::span<const double> y, std::span<const Index> idx,
                           DrWeighting mode, double clip = kDefaultClip);
EstimateRecord dr_estimate(const Tensor& pi, const OutcomeModel& model, const PropensityModel& prop,
                           const Tensor& z, std::span<const int> t, std::span<const double> y,
                           std::span<const Index> idx, DrWeighting mode, double clip = kDefaultClip);

// ---------------------------------------------------------------- metrics

struct ErrorSummary {
  double rmse = 0.0;
  double mae = 0.0;
};

// pairs of (tau_hat, tau). Throws DataError on an empty list.
ErrorSummary rmse_mae(std::span<const std::pair<double, double>> pairs);

}  // namespace cone::est
