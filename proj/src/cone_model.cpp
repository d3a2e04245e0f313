#include "cone/cone_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "cone/error.hpp"
#include "cone/policy.hpp"
#include "cone/rng.hpp"

namespace cone::model {

namespace {

constexpr double kProbFloor = 1e-12;

// Seed streams off ConeConfig::seed.
enum Stream : std::uint64_t { Init = 1, Permutation = 2 };

std::string head_name(const std::string& prefix, const std::string& tag, Index k) {
  return prefix + tag + std::to_string(k);
}

std::string layer_prefix(const char* branch, Index layer) {
  return std::string(branch) + "." + std::to_string(layer) + ".";
}

Expr gather(const Expr& x, std::span<const Index> idx) {
  return ad::gather_rows(x, std::vector<Index>(idx.begin(), idx.end()));
}

Tensor column_of(std::span<const double> v) { return Tensor::column(v); }

}  // namespace

void ConeConfig::validate() const {
  if (dim == 0 || heads == 0) throw ConfigError("cone: dim and heads must be positive");
  if (dim % heads != 0) throw ConfigError("cone: dim must be divisible by heads");
  if (layers == 0) throw ConfigError("cone: at least one attention layer");
  if (!(gamma >= 0.0) || !(zeta >= 0.0)) throw ConfigError("cone: gamma and zeta must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("cone: learning rate must be positive");
  if (epochs < 1) throw ConfigError("cone: epochs must be >= 1");
  if (patience < 1) throw ConfigError("cone: patience must be >= 1");
  if (critic_hidden == 0 || outcome_hidden == 0) throw ConfigError("cone: hidden widths must be positive");
  if (!(leaky_slope >= 0.0)) throw ConfigError("cone: leaky slope must be >= 0");
}

AttentionLayout AttentionLayout::from_graph(const graph::Graph& g) {
  const graph::Adjacency adj = graph::add_self_loops(g.adjacency());
  auto seg = std::make_shared<ad::Segments>();
  seg->offsets.assign(adj.offsets().begin(), adj.offsets().end());
  seg->targets.assign(adj.targets().begin(), adj.targets().end());
  AttentionLayout out;
  out.sources = std::make_shared<const std::vector<Index>>(adj.sources());
  out.targets = std::make_shared<const std::vector<Index>>(seg->targets);
  out.segments = std::move(seg);
  return out;
}

GatOutput gat_layer(const Expr& x, const AttentionLayout& layout, const std::string& prefix,
                    const std::string& weight_tag, const std::string& attn_tag, Index heads,
                    Index head_dim, double leaky_slope) {
  if (x.rows() != layout.segments->num_segments())
    throw ShapeError("gat_layer: feature rows do not match the graph");
  GatOutput out;
  std::vector<Expr> parts;
  for (Index k = 0; k < heads; ++k) {
    const Expr w = ad::input(head_name(prefix, weight_tag, k), x.cols(), head_dim);
    const Expr a = ad::input(head_name(prefix, attn_tag, k), 2 * head_dim, 1);
    const Expr h = ad::matmul(x, w);
    // a^T [h_i || h_j] splits into a per-source and a per-target score.
    const Expr s = ad::matmul(h, ad::slice_rows(a, 0, head_dim));
    const Expr r = ad::matmul(h, ad::slice_rows(a, head_dim, head_dim));
    const Expr logits =
        ad::leaky_relu(ad::gather_rows(s, layout.sources) + ad::gather_rows(r, layout.targets), leaky_slope);
    const Expr alpha = ad::segment_softmax(logits, layout.segments);
    out.attention.push_back(alpha);
    parts.push_back(ad::elu(ad::segment_weighted_sum(alpha, h, layout.segments)));
  }
  out.output = parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
  return out;
}

ConeNetwork::ConeNetwork(const ConeConfig& cfg, Index feature_dim) : cfg_(cfg), feature_dim_(feature_dim) {
  cfg_.validate();
  if (feature_dim == 0) throw ShapeError("cone: empty feature matrix");
}

ad::MlpShape ConeNetwork::outcome_head() const { return {"fy", cfg_.dim, {cfg_.outcome_hidden}, 1}; }

ad::MlpShape ConeNetwork::critic() const {
  return {"h", 2 * cfg_.dim, {cfg_.critic_hidden, cfg_.critic_hidden}, 1};
}

ParamStore ConeNetwork::init_params(std::uint64_t seed) const {
  ParamStore p;
  const Index hd = cfg_.head_dim();
  std::uint64_t stream = 0;
  for (Index l = 0; l < cfg_.layers; ++l) {
    const Index in = l == 0 ? feature_dim_ : cfg_.dim;
    const auto gt = layer_prefix("gt", l);
    const auto gy = layer_prefix("gy", l);
    for (Index k = 0; k < cfg_.heads; ++k) {
      p[head_name(gt, "W", k)] = ad::xavier_init(in, hd, derive_seed(seed, ++stream));
      p[head_name(gt, "a", k)] = ad::xavier_init(2 * hd, 1, derive_seed(seed, ++stream));
      p[head_name(gy, "U", k)] = ad::xavier_init(in, hd, derive_seed(seed, ++stream));
      p[head_name(gy, "b", k)] = ad::xavier_init(2 * hd, 1, derive_seed(seed, ++stream));
    }
  }
  ad::init_mlp(p, outcome_head(), derive_seed(seed, ++stream));
  ad::init_mlp(p, critic(), derive_seed(seed, ++stream));
  p["ft.v"] = ad::xavier_init(cfg_.dim, 1, derive_seed(seed, ++stream));
  p["ft.c"] = Tensor(1, 1);
  return p;
}

std::set<std::string> ConeNetwork::critic_param_names() const {
  const auto names = ad::mlp_param_names(critic());
  return {names.begin(), names.end()};
}

std::set<std::string> ConeNetwork::main_param_names() const {
  std::set<std::string> out;
  for (const auto& [name, _] : init_params(0))
    if (name.rfind("h.", 0) != 0) out.insert(name);
  return out;
}

ConeNetwork::Reps ConeNetwork::representations(const Expr& x, const AttentionLayout& layout) const {
  if (x.cols() != feature_dim_) throw ShapeError("cone: feature width mismatch");
  const Index hd = cfg_.head_dim();
  Reps r;
  Expr ht = x;
  Expr hy = x;
  for (Index l = 0; l < cfg_.layers; ++l) {
    auto t = gat_layer(ht, layout, layer_prefix("gt", l), "W", "a", cfg_.heads, hd, cfg_.leaky_slope);
    auto y = gat_layer(hy, layout, layer_prefix("gy", l), "U", "b", cfg_.heads, hd, cfg_.leaky_slope);
    ht = t.output;
    hy = y.output;
    r.attention_t = std::move(t.attention);
    r.attention_y = std::move(y.attention);
  }
  r.zt = ht;
  r.zy = hy;
  return r;
}

Expr outcome_loss(const Expr& zy, std::span<const double> y, std::span<const Index> idx,
                  const ad::MlpShape& head) {
  if (idx.empty()) throw DataError("outcome_loss: empty index set");
  const Expr pred = ad::mlp(head, gather(zy, idx));
  return ad::mean(ad::square(pred - ad::constant(column_of(take(y, idx)))));
}

Expr treatment_loss(const Expr& zt, std::span<const int> t, std::span<const Index> idx) {
  if (idx.empty()) throw DataError("treatment_loss: empty index set");
  Tensor pos(idx.size(), 1), neg(idx.size(), 1);
  for (Index k = 0; k < idx.size(); ++k) {
    pos(k, 0) = t[idx[k]] == 1 ? 1.0 : 0.0;
    neg(k, 0) = 1.0 - pos(k, 0);
  }
  const Expr logits = ad::add_bias(ad::matmul(gather(zt, idx), ad::input("ft.v", zt.cols(), 1)),
                                   ad::input("ft.c", 1, 1));
  const Expr p = ad::clamp(ad::sigmoid(logits), kProbFloor, 1.0 - kProbFloor);
  const Expr ll = ad::hadamard(ad::constant(std::move(pos)), ad::log(p)) +
                  ad::hadamard(ad::constant(std::move(neg)), ad::log(ad::affine(p, -1.0, 1.0)));
  return -1.0 * ad::mean(ll);
}

Expr mi_loss(const Expr& zt, const Expr& zy, std::span<const Index> idx, std::span<const Index> perm,
             const ad::MlpShape& critic) {
  if (idx.empty()) throw DataError("mi_loss: empty index set");
  std::vector<Index> a(idx.begin(), idx.end()), b(perm.begin(), perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw DataError("mi_loss: perm is not a permutation of idx");
  const Expr zt_rows = gather(zt, idx);
  const Expr joint = ad::mlp(critic, ad::concat_cols({zt_rows, gather(zy, idx)}));
  const Expr marginal = ad::mlp(critic, ad::concat_cols({zt_rows, gather(zy, perm)}));
  return ad::log_mean_exp(marginal) - ad::mean(joint);
}

Expr total_loss(const Expr& ly, const Expr& lt, const Expr& lmi, double gamma, double zeta) {
  return ly + gamma * lt + zeta * lmi;
}

double total_loss(double ly, double lt, double lmi, double gamma, double zeta) {
  return ly + gamma * lt + zeta * lmi;
}

Tensor PartialReps::concatenated() const {
  if (zt.rows() != zy.rows()) throw ShapeError("partial representations disagree on row count");
  Matrix m(zy.rows(), zy.cols() + zt.cols());
  m << zy.mat(), zt.mat();
  return Tensor(std::move(m));
}

PartialReps compute_representations(const ConeNetwork& net, const ParamStore& params,
                                    const Tensor& features, const graph::Graph& g) {
  const auto layout = AttentionLayout::from_graph(g);
  const Expr x = ad::input("X", features.rows(), features.cols());
  const auto reps = net.representations(x, layout);
  ad::Bindings b = ad::bind_params(params);
  b.bind("X", features);
  const std::vector<Expr> roots{reps.zt, reps.zy};
  ad::Evaluation ev(roots, b);
  return {ev.value(reps.zt), ev.value(reps.zy)};
}

TrainResult train(const datagen::NetworkedDataset& ds, const ConeConfig& cfg, const Splits& splits) {
  const ConeNetwork net(cfg, ds.features.cols());
  if (splits.train.empty() || splits.val.empty()) throw DataError("cone train: empty train or validation split");
  const auto layout = AttentionLayout::from_graph(ds.graph);
  const Expr x = ad::input("X", ds.size(), ds.features.cols());
  const auto reps = net.representations(x, layout);

  const Expr ly = outcome_loss(reps.zy, ds.y, splits.train, net.outcome_head());
  const Expr lt = treatment_loss(reps.zt, ds.t, splits.train);
  const Expr ly_val = outcome_loss(reps.zy, ds.y, splits.val, net.outcome_head());

  TrainResult res;
  res.params = net.init_params(derive_seed(cfg.seed, Init));
  const auto main_names = net.main_param_names();
  const auto critic_names = net.critic_param_names();
  std::set<std::string> all = main_names;
  all.insert(critic_names.begin(), critic_names.end());

  ad::AdamState opt_main, opt_critic;
  opt_main.config.lr = cfg.lr;
  opt_critic.config.lr = cfg.lr;
  Rng perm_rng = make_rng(derive_seed(cfg.seed, Permutation));
  std::vector<Index> perm(splits.train.begin(), splits.train.end());

  ParamStore best = res.params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), perm_rng);
    const Expr lmi = mi_loss(reps.zt, reps.zy, splits.train, perm, net.critic());
    const Expr loss = total_loss(ly, lt, lmi, cfg.gamma, cfg.zeta);

    ad::Bindings b = ad::bind_params(res.params);
    b.bind("X", ds.features);
    const std::vector<Expr> roots{loss, ly, lt, lmi, ly_val};
    std::optional<ad::Evaluation> ev;
    try {
      ev.emplace(roots, b);
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << "cone train: non-finite value at epoch " << epoch << ": " << e.what();
      throw NumericalError(msg.str());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = ev->value(loss).item();
    rec.outcome = ev->value(ly).item();
    rec.treatment = ev->value(lt).item();
    rec.mi = ev->value(lmi).item();
    rec.val_outcome = ev->value(ly_val).item();
    res.history.push_back(rec);

    if (rec.val_outcome < best_val) {
      best_val = rec.val_outcome;
      best = res.params;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }

    ad::Gradients grads = ev->backward(loss, all);
    ad::Gradients g_critic;
    for (const auto& n : critic_names) g_critic.emplace(n, std::move(grads.at(n)));
    for (const auto& n : critic_names) grads.erase(n);
    ad::adam_step(res.params, grads, opt_main);
    ad::adam_step(res.params, g_critic, opt_critic);
  }

  res.params = std::move(best);
  res.reps = compute_representations(net, res.params, ds.features, ds.graph);
  return res;
}

est::EstimateRecord dr_from_representation(const Tensor& z, const datagen::NetworkedDataset& ds,
                                           const Tensor& pi, const Splits& splits,
                                           const InferenceConfig& cfg, const Tensor* outcome_override) {
  if (z.rows() != ds.size()) throw ShapeError("dr_from_representation: representation rows mismatch");
  const auto train = est::make_sample(z, ds.t, ds.y, splits.train);
  Tensor outcomes;
  if (outcome_override != nullptr) {
    if (outcome_override->rows() != ds.size() || outcome_override->cols() != 2)
      throw ShapeError("dr_from_representation: outcome override must be n x 2");
    for (int arm = 0; arm < 2; ++arm)
      if (std::count(train.t.begin(), train.t.end(), arm) == 0)
        throw DataError("dr_from_representation: arm " + std::to_string(arm) + " empty in training data");
    outcomes = *outcome_override;
  } else {
    const auto val = est::make_sample(z, ds.t, ds.y, splits.val);
    est::OutcomeConfig oc;
    oc.mlp = cfg.outcome;
    const auto model = est::fit_outcome(train, est::OutcomeVariant::DMX, oc, &val);
    outcomes = model.predict_both(z);
  }
  const auto prop = est::fit_propensity(train.z, train.t, cfg.propensity);
  const auto p1 = prop.predict(z);
  auto rec = est::dr_estimate(pi, outcomes, p1, ds.t, ds.y, splits.test, cfg.weighting, cfg.clip);
  rec.tau = policy::true_utility(pi, ds.truth.y0, ds.truth.y1, splits.test);
  return rec;
}

est::EstimateRecord infer_utility(const PartialReps& reps, const datagen::NetworkedDataset& ds,
                                  const Tensor& pi, const Splits& splits, const InferenceConfig& cfg,
                                  const Tensor* outcome_override) {
  auto rec = dr_from_representation(reps.concatenated(), ds, pi, splits, cfg, outcome_override);
  rec.estimator = "CONE";
  return rec;
}

double estimate_mutual_information(const Tensor& a, const Tensor& b, const MiEstimatorConfig& cfg) {
  if (a.rows() != b.rows() || a.rows() < 2) throw ShapeError("estimate_mutual_information: need paired samples");
  const Index n = a.rows();
  const ad::MlpShape critic{"h", a.cols() + b.cols(), cfg.hidden, 1};
  ParamStore params;
  ad::init_mlp(params, critic, derive_seed(cfg.seed, Init));
  const auto names = ad::mlp_param_names(critic);
  const std::set<std::string> wrt(names.begin(), names.end());

  const Expr za = ad::input("A", n, a.cols());
  const Expr zb = ad::input("B", n, b.cols());
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng = make_rng(derive_seed(cfg.seed, Permutation));
  std::vector<Index> perm = idx;

  ad::AdamState opt;
  opt.config.lr = cfg.lr;
  for (int step = 0; step < cfg.steps; ++step) {
    std::shuffle(perm.begin(), perm.end(), rng);
    const Expr loss = mi_loss(za, zb, idx, perm, critic);
    ad::Bindings bind = ad::bind_params(params);
    bind.bind("A", a).bind("B", b);
    ad::Evaluation ev(loss, bind);
    ad::adam_step(params, ev.backward(loss, wrt), opt);
  }

  // Average the bound over several fresh pairings to smooth the marginal term.
  double total = 0.0;
  const int reps = std::max(1, cfg.eval_permutations);
  for (int r = 0; r < reps; ++r) {
    std::shuffle(perm.begin(), perm.end(), rng);
    ad::Bindings bind = ad::bind_params(params);
    bind.bind("A", a).bind("B", b);
    total -= ad::evaluate(mi_loss(za, zb, idx, perm, critic), bind).item();
  }
  return total / reps;
}

}  // namespace cone::model
