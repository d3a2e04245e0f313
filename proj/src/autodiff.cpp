#include "cone/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <unordered_set>
#include <utility>

#include "cone/error.hpp"

namespace cone::ad {

namespace {

std::string shape_str(Index r, Index c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

std::string shape_str(const Expr& e) { return shape_str(e.rows(), e.cols()); }

Expr make(Op op, Index rows, Index cols, std::vector<Expr> inputs) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->rows = rows;
  n->cols = cols;
  n->inputs = std::move(inputs);
  return Expr(std::move(n));
}

Expr make_with(Op op, Index rows, Index cols, std::vector<Expr> inputs,
               const std::function<void(Node&)>& fill) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->rows = rows;
  n->cols = cols;
  n->inputs = std::move(inputs);
  fill(*n);
  return Expr(std::move(n));
}

void require_valid(const Expr& e, const char* what) {
  if (!e) throw ShapeError(std::string(what) + ": empty expression");
}

void require_same_shape(const Expr& a, const Expr& b, const char* what) {
  require_valid(a, what);
  require_valid(b, what);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void check_segments(const Segments& s, const char* what) {
  if (s.offsets.empty() || s.offsets.front() != 0)
    throw ShapeError(std::string(what) + ": malformed segment offsets");
  if (!std::is_sorted(s.offsets.begin(), s.offsets.end()))
    throw ShapeError(std::string(what) + ": segment offsets must be nondecreasing");
}

double elu_f(double x) { return x > 0.0 ? x : std::expm1(x); }

double sigmoid_f(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Hadamard: return "hadamard";
    case Op::AddBias: return "add_bias";
    case Op::Affine: return "affine";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::SliceCols: return "slice_cols";
    case Op::GatherRows: return "gather_rows";
    case Op::Elu: return "elu";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Clamp: return "clamp";
    case Op::Square: return "square";
    case Op::Mean: return "mean";
    case Op::SegmentSoftmax: return "segment_softmax";
    case Op::SegmentWeightedSum: return "segment_weighted_sum";
    case Op::LogMeanExp: return "log_mean_exp";
  }
  return "?";
}

Index Expr::rows() const { return node_->rows; }
Index Expr::cols() const { return node_->cols; }

// ---------------------------------------------------------------- builders

Expr input(std::string name, Index rows, Index cols) {
  if (name.empty()) throw ShapeError("input: empty name");
  return make_with(Op::Input, rows, cols, {}, [&](Node& n) { n.name = std::move(name); });
}

Expr constant(Tensor value) { return constant(std::make_shared<const Tensor>(std::move(value))); }

Expr constant(std::shared_ptr<const Tensor> value) {
  if (!value) throw ShapeError("constant: null tensor");
  if (!value->all_finite()) throw NumericalError("constant: non-finite value");
  const Index r = value->rows(), c = value->cols();
  return make_with(Op::Constant, r, c, {}, [&](Node& n) { n.constant = std::move(value); });
}

Expr matmul(const Expr& a, const Expr& b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a) + " * " + shape_str(b));
  return make(Op::MatMul, a.rows(), b.cols(), {a, b});
}

Expr add(const Expr& a, const Expr& b) {
  require_same_shape(a, b, "add");
  return make(Op::Add, a.rows(), a.cols(), {a, b});
}

Expr sub(const Expr& a, const Expr& b) {
  require_same_shape(a, b, "sub");
  return make(Op::Sub, a.rows(), a.cols(), {a, b});
}

Expr hadamard(const Expr& a, const Expr& b) {
  require_same_shape(a, b, "hadamard");
  return make(Op::Hadamard, a.rows(), a.cols(), {a, b});
}

Expr add_bias(const Expr& x, const Expr& bias) {
  require_valid(x, "add_bias");
  require_valid(bias, "add_bias");
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw ShapeError("add_bias: bias " + shape_str(bias) + " does not fit " + shape_str(x));
  return make(Op::AddBias, x.rows(), x.cols(), {x, bias});
}

Expr affine(const Expr& x, double scale, double shift) {
  require_valid(x, "affine");
  return make_with(Op::Affine, x.rows(), x.cols(), {x}, [&](Node& n) {
    n.a = scale;
    n.b = shift;
  });
}

Expr concat_cols(const std::vector<Expr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Index cols = 0;
  for (const auto& p : parts) {
    require_valid(p, "concat_cols");
    if (p.rows() != parts.front().rows())
      throw ShapeError("concat_cols: row counts differ " + shape_str(p) + " vs " +
                       shape_str(parts.front()));
    cols += p.cols();
  }
  return make(Op::ConcatCols, parts.front().rows(), cols, parts);
}

Expr slice_rows(const Expr& x, Index begin, Index count) {
  require_valid(x, "slice_rows");
  if (begin + count > x.rows())
    throw ShapeError("slice_rows: range exceeds " + shape_str(x));
  return make_with(Op::SliceRows, count, x.cols(), {x},
                   [&](Node& n) { n.a = static_cast<double>(begin); });
}

Expr slice_cols(const Expr& x, Index begin, Index count) {
  require_valid(x, "slice_cols");
  if (begin + count > x.cols())
    throw ShapeError("slice_cols: range exceeds " + shape_str(x));
  return make_with(Op::SliceCols, x.rows(), count, {x},
                   [&](Node& n) { n.a = static_cast<double>(begin); });
}

Expr gather_rows(const Expr& x, std::shared_ptr<const std::vector<Index>> rows) {
  require_valid(x, "gather_rows");
  if (!rows) throw ShapeError("gather_rows: null index");
  for (Index r : *rows)
    if (r >= x.rows()) throw ShapeError("gather_rows: row " + std::to_string(r) + " outside " + shape_str(x));
  const Index count = rows->size();
  return make_with(Op::GatherRows, count, x.cols(), {x},
                   [&](Node& n) { n.index = std::move(rows); });
}

Expr gather_rows(const Expr& x, std::vector<Index> rows) {
  return gather_rows(x, std::make_shared<const std::vector<Index>>(std::move(rows)));
}

#define CONE_UNARY(fn, OP)                          \
  Expr fn(const Expr& x) {                          \
    require_valid(x, #fn);                          \
    return make(Op::OP, x.rows(), x.cols(), {x});   \
  }
CONE_UNARY(elu, Elu)
CONE_UNARY(sigmoid, Sigmoid)
CONE_UNARY(exp, Exp)
CONE_UNARY(log, Log)
CONE_UNARY(square, Square)
#undef CONE_UNARY

Expr leaky_relu(const Expr& x, double slope) {
  require_valid(x, "leaky_relu");
  return make_with(Op::LeakyRelu, x.rows(), x.cols(), {x}, [&](Node& n) { n.a = slope; });
}

Expr clamp(const Expr& x, double lo, double hi) {
  require_valid(x, "clamp");
  if (!(lo <= hi)) throw ShapeError("clamp: lo > hi");
  return make_with(Op::Clamp, x.rows(), x.cols(), {x}, [&](Node& n) {
    n.a = lo;
    n.b = hi;
  });
}

Expr mean(const Expr& x) {
  require_valid(x, "mean");
  if (x.rows() * x.cols() == 0) throw ShapeError("mean: empty input");
  return make(Op::Mean, 1, 1, {x});
}

Expr log_mean_exp(const Expr& x) {
  require_valid(x, "log_mean_exp");
  if (x.rows() * x.cols() == 0) throw ShapeError("log_mean_exp: empty input");
  return make(Op::LogMeanExp, 1, 1, {x});
}

Expr segment_softmax(const Expr& logits, std::shared_ptr<const Segments> seg) {
  require_valid(logits, "segment_softmax");
  if (!seg) throw ShapeError("segment_softmax: null segments");
  check_segments(*seg, "segment_softmax");
  if (seg->num_entries() != logits.rows())
    throw ShapeError("segment_softmax: " + std::to_string(seg->num_entries()) +
                     " segment entries vs logits " + shape_str(logits));
  return make_with(Op::SegmentSoftmax, logits.rows(), logits.cols(), {logits},
                   [&](Node& n) { n.segments = std::move(seg); });
}

Expr segment_weighted_sum(const Expr& weights, const Expr& values,
                          std::shared_ptr<const Segments> seg) {
  require_valid(weights, "segment_weighted_sum");
  require_valid(values, "segment_weighted_sum");
  if (!seg) throw ShapeError("segment_weighted_sum: null segments");
  check_segments(*seg, "segment_weighted_sum");
  if (weights.cols() != 1 || weights.rows() != seg->num_entries())
    throw ShapeError("segment_weighted_sum: weights " + shape_str(weights) + " vs " +
                     std::to_string(seg->num_entries()) + " entries");
  if (seg->targets.size() != seg->num_entries())
    throw ShapeError("segment_weighted_sum: targets/offsets disagree");
  for (Index t : seg->targets)
    if (t >= values.rows()) throw ShapeError("segment_weighted_sum: target outside values");
  const Index s = seg->num_segments();
  return make_with(Op::SegmentWeightedSum, s, values.cols(), {weights, values},
                   [&](Node& n) { n.segments = std::move(seg); });
}

// ---------------------------------------------------------------- bindings

Bindings& Bindings::bind(const std::string& name, const Tensor& t) {
  owned_.erase(name);
  refs_[name] = &t;
  return *this;
}

Bindings& Bindings::bind_copy(const std::string& name, Tensor t) {
  auto p = std::make_shared<const Tensor>(std::move(t));
  refs_[name] = p.get();
  owned_[name] = std::move(p);
  return *this;
}

const Tensor* Bindings::find(const std::string& name) const {
  auto it = refs_.find(name);
  return it == refs_.end() ? nullptr : it->second;
}

// ---------------------------------------------------------------- forward

namespace {

std::vector<const Node*> topo_order(std::span<const Expr> roots) {
  std::vector<const Node*> order;
  std::unordered_set<const Node*> done;
  std::vector<std::pair<const Node*, Index>> stack;
  for (const auto& r : roots) {
    if (!r) throw ShapeError("evaluate: empty root");
    if (done.count(r.get())) continue;
    stack.emplace_back(r.get(), 0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const Node* child = node->inputs[next++].get();
        if (!done.count(child)) stack.emplace_back(child, 0);
      } else {
        if (done.insert(node).second) order.push_back(node);
        stack.pop_back();
      }
    }
  }
  return order;
}

Tensor forward(const Node& n, const std::vector<const Tensor*>& in, const Bindings& bindings) {
  switch (n.op) {
    case Op::Input: {
      const Tensor* t = bindings.find(n.name);
      if (!t) throw Error("unbound", "unbound input '" + n.name + "'");
      if (t->rows() != n.rows || t->cols() != n.cols)
        throw ShapeError("input '" + n.name + "' bound to " + shape_str(t->rows(), t->cols()) +
                         ", declared " + shape_str(n.rows, n.cols));
      return *t;
    }
    case Op::Constant:
      return *n.constant;
    case Op::MatMul:
      return Tensor(Matrix(in[0]->mat() * in[1]->mat()));
    case Op::Add:
      return Tensor(Matrix(in[0]->mat() + in[1]->mat()));
    case Op::Sub:
      return Tensor(Matrix(in[0]->mat() - in[1]->mat()));
    case Op::Hadamard:
      return Tensor(Matrix(in[0]->mat().cwiseProduct(in[1]->mat())));
    case Op::AddBias: {
      Matrix m = in[0]->mat();
      m.rowwise() += in[1]->mat().row(0);
      return Tensor(std::move(m));
    }
    case Op::Affine:
      return Tensor(Matrix((in[0]->mat().array() * n.a + n.b).matrix()));
    case Op::ConcatCols: {
      Tensor out(n.rows, n.cols);
      Eigen::Index c = 0;
      for (const Tensor* t : in) {
        out.map().middleCols(c, t->mat().cols()) = t->mat();
        c += t->mat().cols();
      }
      return out;
    }
    case Op::SliceRows:
      return Tensor(Matrix(in[0]->mat().middleRows(static_cast<Eigen::Index>(n.a), n.rows)));
    case Op::SliceCols:
      return Tensor(Matrix(in[0]->mat().middleCols(static_cast<Eigen::Index>(n.a), n.cols)));
    case Op::GatherRows: {
      Tensor out(n.rows, n.cols);
      const auto& idx = *n.index;
      for (Index r = 0; r < idx.size(); ++r) out.map().row(r) = in[0]->mat().row(idx[r]);
      return out;
    }
    case Op::Elu:
      return Tensor(Matrix(in[0]->mat().unaryExpr(&elu_f)));
    case Op::LeakyRelu: {
      const double s = n.a;
      return Tensor(Matrix(in[0]->mat().unaryExpr([s](double x) { return x > 0.0 ? x : s * x; })));
    }
    case Op::Sigmoid:
      return Tensor(Matrix(in[0]->mat().unaryExpr(&sigmoid_f)));
    case Op::Exp:
      return Tensor(Matrix(in[0]->mat().array().exp().matrix()));
    case Op::Log: {
      if ((in[0]->mat().array() <= 0.0).any()) throw NumericalError("log of a non-positive value");
      return Tensor(Matrix(in[0]->mat().array().log().matrix()));
    }
    case Op::Clamp:
      return Tensor(Matrix(in[0]->mat().cwiseMax(n.a).cwiseMin(n.b)));
    case Op::Square:
      return Tensor(Matrix(in[0]->mat().array().square().matrix()));
    case Op::Mean:
      return Tensor::scalar(in[0]->mat().mean());
    case Op::LogMeanExp: {
      const double m = in[0]->mat().maxCoeff();
      const double s = (in[0]->mat().array() - m).exp().mean();
      return Tensor::scalar(m + std::log(s));
    }
    case Op::SegmentSoftmax: {
      const auto& off = n.segments->offsets;
      const Matrix& x = in[0]->mat();
      Tensor out(n.rows, n.cols);
      for (Index s = 0; s + 1 < off.size(); ++s) {
        const Index b = off[s], len = off[s + 1] - off[s];
        if (len == 0) continue;
        for (Index c = 0; c < n.cols; ++c) {
          auto col = x.col(c).segment(b, len);
          const double m = col.maxCoeff();
          auto e = (col.array() - m).exp();
          out.map().col(c).segment(b, len) = e / e.sum();
        }
      }
      return out;
    }
    case Op::SegmentWeightedSum: {
      const auto& off = n.segments->offsets;
      const auto& tgt = n.segments->targets;
      const Matrix& w = in[0]->mat();
      const Matrix& v = in[1]->mat();
      Tensor out(n.rows, n.cols);
      auto o = out.map();
      for (Index s = 0; s + 1 < off.size(); ++s)
        for (Index e = off[s]; e < off[s + 1]; ++e) o.row(s) += w(e, 0) * v.row(tgt[e]);
      return out;
    }
  }
  throw Error("internal", "unhandled op");
}

}  // namespace

Evaluation::Evaluation(std::span<const Expr> roots, const Bindings& bindings)
    : bindings_(bindings), order_(topo_order(roots)) {
  values_.reserve(order_.size());
  std::vector<const Tensor*> in;
  for (const Node* n : order_) {
    in.clear();
    for (const auto& e : n->inputs) in.push_back(&values_.at(e.get()));
    Tensor v = forward(*n, in, bindings);
    if (!v.all_finite())
      throw NumericalError(std::string("non-finite value produced by ") + op_name(n->op) +
                           (n->op == Op::Input ? " '" + n->name + "'" : std::string()));
    values_.emplace(n, std::move(v));
  }
}

const Tensor& Evaluation::value(const Expr& e) const {
  auto it = values_.find(e.get());
  if (it == values_.end()) throw Error("internal", "expression not part of this evaluation");
  return it->second;
}

// ---------------------------------------------------------------- backward

Gradients Evaluation::backward(const Expr& root, const std::set<std::string>& wrt) const {
  if (root.rows() != 1 || root.cols() != 1)
    throw ShapeError("gradient: root must be scalar, got " + shape_str(root));
  value(root);

  // Nodes that lie on a path to a requested input.
  std::unordered_map<const Node*, bool> needs;
  for (const Node* n : order_) {
    bool need = n->op == Op::Input && wrt.count(n->name) > 0;
    for (const auto& e : n->inputs) need = need || needs[e.get()];
    needs[n] = need;
  }

  std::unordered_map<const Node*, Matrix> adj;
  auto accumulate = [&](const Expr& e, Matrix g) {
    if (!needs[e.get()]) return;
    auto it = adj.find(e.get());
    if (it == adj.end())
      adj.emplace(e.get(), std::move(g));
    else
      it->second += g;
  };

  Gradients out;
  adj.emplace(root.get(), Matrix::Ones(1, 1));
  // order_ covers all roots of this evaluation; walk it backwards and skip
  // nodes the chosen root never reached.
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const Node* n = *it;
    auto found = adj.find(n);
    if (found == adj.end()) continue;
    const Matrix g = std::move(found->second);
    adj.erase(found);
    const auto& ins = n->inputs;
    auto val = [&](Index k) -> const Matrix& { return values_.at(ins[k].get()).mat(); };
    const Matrix& y = values_.at(n).mat();

    switch (n->op) {
      case Op::Input: {
        auto o = out.find(n->name);
        if (o == out.end())
          out.emplace(n->name, Tensor(g));
        else
          o->second.map() += g;
        break;
      }
      case Op::Constant:
        break;
      case Op::MatMul:
        if (needs[ins[0].get()]) accumulate(ins[0], g * val(1).transpose());
        if (needs[ins[1].get()]) accumulate(ins[1], val(0).transpose() * g);
        break;
      case Op::Add:
        accumulate(ins[0], g);
        accumulate(ins[1], g);
        break;
      case Op::Sub:
        accumulate(ins[0], g);
        accumulate(ins[1], -g);
        break;
      case Op::Hadamard:
        if (needs[ins[0].get()]) accumulate(ins[0], g.cwiseProduct(val(1)));
        if (needs[ins[1].get()]) accumulate(ins[1], g.cwiseProduct(val(0)));
        break;
      case Op::AddBias:
        accumulate(ins[0], g);
        if (needs[ins[1].get()]) accumulate(ins[1], g.colwise().sum());
        break;
      case Op::Affine:
        accumulate(ins[0], g * n->a);
        break;
      case Op::ConcatCols: {
        Eigen::Index c = 0;
        for (const auto& e : ins) {
          const auto w = static_cast<Eigen::Index>(e.cols());
          if (needs[e.get()]) accumulate(e, g.middleCols(c, w));
          c += w;
        }
        break;
      }
      case Op::SliceRows: {
        Matrix d = Matrix::Zero(ins[0].rows(), ins[0].cols());
        d.middleRows(static_cast<Eigen::Index>(n->a), n->rows) = g;
        accumulate(ins[0], std::move(d));
        break;
      }
      case Op::SliceCols: {
        Matrix d = Matrix::Zero(ins[0].rows(), ins[0].cols());
        d.middleCols(static_cast<Eigen::Index>(n->a), n->cols) = g;
        accumulate(ins[0], std::move(d));
        break;
      }
      case Op::GatherRows: {
        Matrix d = Matrix::Zero(ins[0].rows(), ins[0].cols());
        const auto& idx = *n->index;
        for (Index r = 0; r < idx.size(); ++r) d.row(idx[r]) += g.row(r);
        accumulate(ins[0], std::move(d));
        break;
      }
      case Op::Elu: {
        const Matrix& x = val(0);
        accumulate(ins[0], g.binaryExpr(x, [](double gg, double xx) {
          return xx > 0.0 ? gg : gg * std::exp(xx);
        }));
        break;
      }
      case Op::LeakyRelu: {
        const double s = n->a;
        accumulate(ins[0], g.binaryExpr(val(0), [s](double gg, double xx) {
          return xx > 0.0 ? gg : gg * s;
        }));
        break;
      }
      case Op::Sigmoid:
        accumulate(ins[0], (g.array() * y.array() * (1.0 - y.array())).matrix());
        break;
      case Op::Exp:
        accumulate(ins[0], g.cwiseProduct(y));
        break;
      case Op::Log:
        accumulate(ins[0], g.cwiseQuotient(val(0)));
        break;
      case Op::Clamp: {
        const double lo = n->a, hi = n->b;
        accumulate(ins[0], g.binaryExpr(val(0), [lo, hi](double gg, double xx) {
          return (xx >= lo && xx <= hi) ? gg : 0.0;
        }));
        break;
      }
      case Op::Square:
        accumulate(ins[0], 2.0 * g.cwiseProduct(val(0)));
        break;
      case Op::Mean: {
        const double scale = g(0, 0) / static_cast<double>(ins[0].rows() * ins[0].cols());
        accumulate(ins[0], Matrix::Constant(ins[0].rows(), ins[0].cols(), scale));
        break;
      }
      case Op::LogMeanExp: {
        const double total = static_cast<double>(ins[0].rows() * ins[0].cols());
        const double lme = y(0, 0);
        accumulate(ins[0], ((val(0).array() - lme).exp() * (g(0, 0) / total)).matrix());
        break;
      }
      case Op::SegmentSoftmax: {
        const auto& off = n->segments->offsets;
        Matrix d = Matrix::Zero(n->rows, n->cols);
        for (Index s = 0; s + 1 < off.size(); ++s) {
          const Index b = off[s], len = off[s + 1] - off[s];
          if (len == 0) continue;
          for (Index c = 0; c < n->cols; ++c) {
            auto ys = y.col(c).segment(b, len);
            auto gs = g.col(c).segment(b, len);
            const double dot = ys.dot(gs);
            d.col(c).segment(b, len) = (ys.array() * (gs.array() - dot)).matrix();
          }
        }
        accumulate(ins[0], std::move(d));
        break;
      }
      case Op::SegmentWeightedSum: {
        const auto& off = n->segments->offsets;
        const auto& tgt = n->segments->targets;
        const Matrix& w = val(0);
        const Matrix& v = val(1);
        const bool need_w = needs[ins[0].get()], need_v = needs[ins[1].get()];
        Matrix dw = need_w ? Matrix::Zero(w.rows(), 1) : Matrix();
        Matrix dv = need_v ? Matrix::Zero(v.rows(), v.cols()) : Matrix();
        for (Index s = 0; s + 1 < off.size(); ++s) {
          for (Index e = off[s]; e < off[s + 1]; ++e) {
            if (need_w) dw(e, 0) = g.row(s).dot(v.row(tgt[e]));
            if (need_v) dv.row(tgt[e]) += w(e, 0) * g.row(s);
          }
        }
        if (need_w) accumulate(ins[0], std::move(dw));
        if (need_v) accumulate(ins[1], std::move(dv));
        break;
      }
    }
  }

  for (const auto& name : wrt) {
    if (out.count(name)) continue;
    const Tensor* t = bindings_.find(name);
    if (!t) throw Error("unbound", "gradient requested for unbound input '" + name + "'");
    out.emplace(name, Tensor(t->rows(), t->cols()));
  }
  return out;
}

Tensor evaluate(const Expr& e, const Bindings& bindings) {
  Evaluation ev(e, bindings);
  return ev.value(e);
}

Gradients gradient(const Expr& e, const Bindings& bindings, const std::set<std::string>& wrt) {
  Evaluation ev(e, bindings);
  return ev.backward(e, wrt);
}

}  // namespace cone::ad
