#include "cone/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cone/error.hpp"
#include "cone/nn.hpp"
#include "cone/rng.hpp"
#include "cone/splits.hpp"

namespace cone::est {

namespace {

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix with_intercept(const Tensor& z) {
  Matrix a(z.mat().rows(), z.mat().cols() + 1);
  a.leftCols(z.mat().cols()) = z.mat();
  a.col(z.mat().cols()).setOnes();
  return a;
}

void check_arms(std::span<const int> t, const char* who) {
  bool has0 = false, has1 = false;
  for (int v : t) {
    if (v != 0 && v != 1) throw DataError(std::string(who) + ": treatments must be 0/1");
    (v ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw DataError(std::string(who) + ": both treatment arms must be present");
}

Vector ridge_solve(const Matrix& a, const Vector& y, double ridge) {
  Matrix gram = a.transpose() * a;
  // The last column is the intercept and stays unpenalized.
  for (Eigen::Index k = 0; k + 1 < gram.rows(); ++k) gram(k, k) += ridge;
  gram(gram.rows() - 1, gram.rows() - 1) += 1e-12;
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success) throw NumericalError("ridge normal equations are singular");
  Vector beta = ldlt.solve(a.transpose() * y);
  if (!beta.allFinite()) throw NumericalError("ridge solution is not finite");
  return beta;
}

void check_idx(std::span<const Index> idx, Index n, const char* who) {
  if (idx.empty()) throw DataError(std::string(who) + ": empty index set");
  for (Index i : idx)
    if (i >= n) throw ShapeError(std::string(who) + ": index out of range");
}

}  // namespace

// ---------------------------------------------------------------- propensity

PropensityModel::PropensityModel(Vector weights, double bias, double grad_norm, int iterations)
    : w_(std::move(weights)), b_(bias), grad_norm_(grad_norm), iterations_(iterations), fitted_(true) {}

std::vector<double> PropensityModel::predict(const Tensor& z) const {
  if (!fitted_) throw Error("unfitted", "propensity model is not fitted");
  if (static_cast<Eigen::Index>(z.cols()) != w_.size())
    throw ShapeError("propensity predict: dimension mismatch");
  const Vector lin = z.mat() * w_;
  std::vector<double> p(z.rows());
  for (Index i = 0; i < z.rows(); ++i) p[i] = sigmoid(lin(i) + b_);
  return p;
}

PropensityModel fit_propensity(const Tensor& z, std::span<const int> t, const LogisticConfig& cfg) {
  if (z.rows() != t.size()) throw ShapeError("fit_propensity: row count mismatch");
  check_arms(t, "fit_propensity");
  const Matrix a = with_intercept(z);
  const auto d = a.cols();
  const double n = static_cast<double>(z.rows());
  Vector target(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) target(i) = t[i];

  auto objective = [&](const Vector& theta) {
    const Vector lin = a * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < lin.size(); ++i)
      ll += target(i) * log_sigmoid(lin(i)) + (1.0 - target(i)) * log_sigmoid(-lin(i));
    return ll / n - 0.5 * cfg.l2 * theta.head(d - 1).squaredNorm();
  };

  Vector theta = Vector::Zero(d);
  Vector grad(d);
  double grad_norm = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it <= cfg.max_iterations; ++it) {
    const Vector lin = a * theta;
    Vector p(lin.size()), w(lin.size());
    for (Eigen::Index i = 0; i < lin.size(); ++i) {
      p(i) = sigmoid(lin(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    grad = a.transpose() * (target - p) / n;
    grad.head(d - 1) -= cfg.l2 * theta.head(d - 1);
    grad_norm = grad.norm();
    if (grad_norm < cfg.tolerance || it == cfg.max_iterations) break;

    Matrix info = a.transpose() * w.asDiagonal() * a / n;
    for (Eigen::Index k = 0; k + 1 < d; ++k) info(k, k) += cfg.l2;
    info(d - 1, d - 1) += 1e-12;
    const Vector step = info.ldlt().solve(grad);

    const double f0 = objective(theta);
    double s = 1.0;
    Vector next = theta + step;
    while (objective(next) < f0 - 1e-14 && s > 1e-10) {
      s *= 0.5;
      next = theta + s * step;
    }
    theta = next;
  }
  if (!theta.allFinite()) throw NumericalError("fit_propensity: non-finite coefficients");
  return PropensityModel(theta.head(d - 1), theta(d - 1), grad_norm, it);
}

// ---------------------------------------------------------------- outcome

const char* variant_name(OutcomeVariant v) {
  switch (v) {
    case OutcomeVariant::OLS1: return "OLS1";
    case OutcomeVariant::OLS2: return "OLS2";
    case OutcomeVariant::DMX: return "DM-X";
  }
  return "?";
}

LabeledSample make_sample(const Tensor& z, std::span<const int> t, std::span<const double> y,
                          std::span<const Index> idx) {
  if (t.size() != z.rows() || y.size() != z.rows()) throw ShapeError("make_sample: size mismatch");
  LabeledSample s;
  s.z = Tensor(idx.size(), z.cols());
  s.t.reserve(idx.size());
  s.y.reserve(idx.size());
  for (Index r = 0; r < idx.size(); ++r) {
    s.z.map().row(r) = z.mat().row(idx[r]);
    s.t.push_back(t[idx[r]]);
    s.y.push_back(y[idx[r]]);
  }
  return s;
}

namespace {

ad::MlpShape regressor_shape(Index in, const std::vector<Index>& hidden) {
  return ad::MlpShape{"net", in, hidden, 1};
}

std::pair<Tensor, std::vector<double>> arm_rows(const LabeledSample& s, int arm) {
  std::vector<Index> rows;
  for (Index i = 0; i < s.size(); ++i)
    if (s.t[i] == arm) rows.push_back(i);
  Tensor z(rows.size(), s.z.cols());
  std::vector<double> y;
  for (Index r = 0; r < rows.size(); ++r) {
    z.map().row(r) = s.z.mat().row(rows[r]);
    y.push_back(s.y[rows[r]]);
  }
  return {std::move(z), std::move(y)};
}

}  // namespace

MlpFit fit_mlp_regressor(const Tensor& z, std::span<const double> y, const MlpRegressorConfig& cfg,
                         const Tensor* z_val, std::span<const double> y_val) {
  if (z.rows() == 0) throw DataError("fit_mlp_regressor: no training rows");
  if (y.size() != z.rows()) throw ShapeError("fit_mlp_regressor: label count mismatch");
  const bool use_val = z_val != nullptr && z_val->rows() > 0;
  if (use_val && y_val.size() != z_val->rows()) throw ShapeError("fit_mlp_regressor: validation size mismatch");

  const auto shape = regressor_shape(z.cols(), cfg.hidden);
  MlpFit fit;
  ad::init_mlp(fit.params, shape, cfg.seed);
  const auto names = ad::mlp_param_names(shape);
  const std::set<std::string> wrt(names.begin(), names.end());

  auto mse = [&](const Tensor& x, std::span<const double> target) {
    auto pred = ad::mlp(shape, ad::constant(std::make_shared<const Tensor>(x)));
    return ad::mean(ad::square(pred - ad::constant(Tensor::column(target))));
  };
  const ad::Expr loss = mse(z, y);
  const ad::Expr val_loss = use_val ? mse(*z_val, y_val) : ad::Expr();

  ad::AdamState adam;
  adam.config.lr = cfg.lr;
  ad::ParamStore best = fit.params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const ad::Bindings b = ad::bind_params(fit.params);
    if (use_val) {
      const double v = ad::evaluate(val_loss, b).item();
      fit.val_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        best = fit.params;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    ad::Evaluation ev(loss, b);
    fit.train_loss.push_back(ev.value(loss).item());
    ad::adam_step(fit.params, ev.backward(loss, wrt), adam);
  }
  if (use_val) {
    const double v = ad::evaluate(val_loss, ad::bind_params(fit.params)).item();
    if (v < best_val) best = fit.params;
    fit.params = std::move(best);
  }
  return fit;
}

std::vector<double> predict_mlp(const ad::ParamStore& params, const std::vector<Index>& hidden,
                                const Tensor& z) {
  const auto shape = regressor_shape(z.cols(), hidden);
  const Tensor out = ad::evaluate(ad::mlp(shape, ad::constant(z)), ad::bind_params(params));
  return {out.values().begin(), out.values().end()};
}

OutcomeModel fit_outcome(const LabeledSample& train, OutcomeVariant variant, const OutcomeConfig& cfg,
                         const LabeledSample* validation) {
  if (train.t.size() != train.z.rows() || train.y.size() != train.z.rows())
    throw ShapeError("fit_outcome: sample size mismatch");
  OutcomeModel m;
  m.variant_ = variant;
  m.dim_ = train.z.cols();
  for (int arm = 0; arm < 2; ++arm)
    if (std::count(train.t.begin(), train.t.end(), arm) == 0)
      throw DataError(std::string("fit_outcome: treatment arm ") + std::to_string(arm) + " is empty");

  switch (variant) {
    case OutcomeVariant::OLS1: {
      Matrix a(train.z.rows(), train.z.cols() + 2);
      a.leftCols(train.z.cols()) = train.z.mat();
      for (Index i = 0; i < train.size(); ++i) a(i, train.z.cols()) = train.t[i];
      a.col(train.z.cols() + 1).setOnes();
      const Eigen::Map<const Vector> y(train.y.data(), static_cast<Eigen::Index>(train.y.size()));
      m.coef_[0] = ridge_solve(a, y, cfg.ridge);
      m.coef_[1] = m.coef_[0];
      break;
    }
    case OutcomeVariant::OLS2: {
      for (int arm = 0; arm < 2; ++arm) {
        auto [z, y] = arm_rows(train, arm);
        m.coef_[arm] = ridge_solve(with_intercept(z), Eigen::Map<const Vector>(y.data(), y.size()), cfg.ridge);
      }
      break;
    }
    case OutcomeVariant::DMX: {
      m.hidden_ = cfg.mlp.hidden;
      for (int arm = 0; arm < 2; ++arm) {
        auto [z, y] = arm_rows(train, arm);
        MlpRegressorConfig arm_cfg = cfg.mlp;
        arm_cfg.seed = derive_seed(cfg.mlp.seed, static_cast<std::uint64_t>(arm));
        if (validation != nullptr) {
          auto [zv, yv] = arm_rows(*validation, arm);
          m.nets_[arm] = fit_mlp_regressor(z, y, arm_cfg, &zv, yv).params;
        } else {
          m.nets_[arm] = fit_mlp_regressor(z, y, arm_cfg).params;
        }
      }
      break;
    }
  }
  m.fitted_ = true;
  return m;
}

std::vector<double> OutcomeModel::predict(const Tensor& z, int arm) const {
  if (!fitted_) throw Error("unfitted", "outcome model is not fitted");
  if (arm != 0 && arm != 1) throw DataError("predict: arm must be 0 or 1");
  if (z.cols() != dim_) throw ShapeError("outcome predict: dimension mismatch");
  const Index n = z.rows();
  std::vector<double> out(n);
  switch (variant_) {
    case OutcomeVariant::OLS1: {
      const Vector& c = coef_[0];
      const Vector lin = z.mat() * c.head(dim_);
      for (Index i = 0; i < n; ++i) out[i] = lin(i) + c(dim_) * arm + c(dim_ + 1);
      break;
    }
    case OutcomeVariant::OLS2: {
      const Vector& c = coef_[arm];
      const Vector lin = z.mat() * c.head(dim_);
      for (Index i = 0; i < n; ++i) out[i] = lin(i) + c(dim_);
      break;
    }
    case OutcomeVariant::DMX:
      out = predict_mlp(nets_[arm], hidden_, z);
      break;
  }
  return out;
}

Tensor OutcomeModel::predict_both(const Tensor& z) const {
  Tensor out(z.rows(), 2);
  for (int arm = 0; arm < 2; ++arm) {
    const auto p = predict(z, arm);
    for (Index i = 0; i < z.rows(); ++i) out(i, arm) = p[i];
  }
  return out;
}

// ---------------------------------------------------------------- estimates

std::vector<double> ips_weights(const Tensor& pi, std::span<const double> prop_treated,
                                std::span<const int> t, std::span<const Index> idx, double clip,
                                WeightDiagnostics* diag) {
  if (pi.cols() != 2 || prop_treated.size() != pi.rows() || t.size() != pi.rows())
    throw ShapeError("ips_weights: size mismatch");
  if (!(clip >= 0.0 && clip < 0.5)) throw DataError("ips_weights: clip must lie in [0, 0.5)");
  check_idx(idx, pi.rows(), "ips_weights");
  std::vector<double> w;
  w.reserve(idx.size());
  WeightDiagnostics d{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0};
  for (Index i : idx) {
    const double p_obs = t[i] ? prop_treated[i] : 1.0 - prop_treated[i];
    const double clipped = std::clamp(p_obs, clip, 1.0 - clip);
    if (clipped != p_obs) ++d.clipped;
    if (!(clipped > 0.0)) throw NumericalError("ips_weights: zero propensity (set clip > 0)");
    w.push_back(pi(i, t[i]) / clipped);
    d.min_weight = std::min(d.min_weight, w.back());
    d.max_weight = std::max(d.max_weight, w.back());
  }
  if (diag) *diag = d;
  return w;
}

double direct_estimate(const Tensor& pi, const Tensor& outcomes, std::span<const Index> idx) {
  if (pi.cols() != 2 || outcomes.cols() != 2 || outcomes.rows() != pi.rows())
    throw ShapeError("direct_estimate: size mismatch");
  check_idx(idx, pi.rows(), "direct_estimate");
  double total = 0.0;
  for (Index i : idx) total += pi(i, 0) * outcomes(i, 0) + pi(i, 1) * outcomes(i, 1);
  return total / static_cast<double>(idx.size());
}

double direct_estimate(const Tensor& pi, const OutcomeModel& model, const Tensor& z,
                       std::span<const Index> idx) {
  return direct_estimate(pi, model.predict_both(z), idx);
}

EstimateRecord ips_estimate(const Tensor& pi, std::span<const double> prop_treated,
                            std::span<const int> t, std::span<const double> y,
                            std::span<const Index> idx, double clip) {
  if (y.size() != pi.rows()) throw ShapeError("ips_estimate: size mismatch");
  EstimateRecord r{"IPS", 0.0, 0.0, {}};
  const auto w = ips_weights(pi, prop_treated, t, idx, clip, &r.diagnostics);
  double total = 0.0;
  for (Index k = 0; k < idx.size(); ++k) total += w[k] * y[idx[k]];
  r.tau_hat = total / static_cast<double>(idx.size());
  return r;
}

EstimateRecord ips_estimate(const Tensor& pi, const PropensityModel& prop, const Tensor& z,
                            std::span<const int> t, std::span<const double> y,
                            std::span<const Index> idx, double clip) {
  const auto p = prop.predict(z);
  return ips_estimate(pi, p, t, y, idx, clip);
}

double snips_from_weights(std::span<const double> w, std::span<const double> y) {
  if (w.size() != y.size() || w.empty()) throw ShapeError("snips: size mismatch");
  double num = 0.0, den = 0.0;
  for (Index k = 0; k < w.size(); ++k) {
    num += w[k] * y[k];
    den += w[k];
  }
  if (!(den > 0.0)) throw NumericalError("snips: weights sum to zero");
  return num / den;
}

EstimateRecord snips_estimate(const Tensor& pi, std::span<const double> prop_treated,
                              std::span<const int> t, std::span<const double> y,
                              std::span<const Index> idx, double clip) {
  if (y.size() != pi.rows()) throw ShapeError("snips_estimate: size mismatch");
  EstimateRecord r{"SNIPS", 0.0, 0.0, {}};
  const auto w = ips_weights(pi, prop_treated, t, idx, clip, &r.diagnostics);
  r.tau_hat = snips_from_weights(w, take(y, idx));
  return r;
}

EstimateRecord snips_estimate(const Tensor& pi, const PropensityModel& prop, const Tensor& z,
                              std::span<const int> t, std::span<const double> y,
                              std::span<const Index> idx, double clip) {
  const auto p = prop.predict(z);
  return snips_estimate(pi, p, t, y, idx, clip);
}

EstimateRecord dr_estimate(const Tensor& pi, const Tensor& outcomes,
                           std::span<const double> prop_treated, std::span<const int> t,
                           std::span<const double> y, std::span<const Index> idx,
                           DrWeighting mode, double clip) {
  if (y.size() != pi.rows() || outcomes.rows() != pi.rows() || outcomes.cols() != 2)
    throw ShapeError("dr_estimate: size mismatch");
  EstimateRecord r{"DR", 0.0, 0.0, {}};
  auto w = ips_weights(pi, prop_treated, t, idx, clip, &r.diagnostics);
  if (mode != DrWeighting::IPS) {
    double sum = 0.0;
    for (double v : w) sum += v;
    if (!(sum > 0.0)) throw NumericalError("dr_estimate: weights sum to zero");
    const double scale = mode == DrWeighting::SNIPS ? static_cast<double>(idx.size()) / sum : 1.0 / sum;
    for (double& v : w) v *= scale;
  }
  double total = 0.0;
  for (Index k = 0; k < idx.size(); ++k) {
    const Index i = idx[k];
    const double direct = pi(i, 0) * outcomes(i, 0) + pi(i, 1) * outcomes(i, 1);
    total += direct + w[k] * (y[i] - outcomes(i, t[i]));
  }
  r.tau_hat = total / static_cast<double>(idx.size());
  return r;
}

EstimateRecord dr_estimate(const Tensor& pi, const OutcomeModel& model, const PropensityModel& prop,
                           const Tensor& z, std::span<const int> t, std::span<const double> y,
                           std::span<const Index> idx, DrWeighting mode, double clip) {
  const auto p = prop.predict(z);
  return dr_estimate(pi, model.predict_both(z), p, t, y, idx, mode, clip);
}

// ---------------------------------------------------------------- metrics

ErrorSummary rmse_mae(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw DataError("rmse_mae: no estimate pairs");
  double sq = 0.0, ab = 0.0;
  for (auto [hat, truth] : pairs) {
    const double e = hat - truth;
    sq += e * e;
    ab += std::abs(e);
  }
  const double k = static_cast<double>(pairs.size());
  return {std::sqrt(sq / k), ab / k};
}

}  // namespace cone::est
