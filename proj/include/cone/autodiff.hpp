#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Expressions are immutable DAGs built from free functions (`matmul`, `elu`,
// `segment_softmax`, ...). Leaves are either named inputs, resolved from a
// `Bindings` table at evaluation time, or constants captured by value. Shapes
// are checked when a node is built, so a malformed graph never reaches the
// evaluator.

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cone/tensor.hpp"

namespace cone::ad {

using Index = std::size_t;

enum class Op {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  Hadamard,
  AddBias,
  Affine,
  ConcatCols,
  SliceRows,
  SliceCols,
  GatherRows,
  Elu,
  LeakyRelu,
  Sigmoid,
  Exp,
  Log,
  Clamp,
  Square,
  Mean,
  SegmentSoftmax,
  SegmentWeightedSum,
  LogMeanExp,
};

const char* op_name(Op op);

// Row segments: segment i covers entries [offsets[i], offsets[i+1]); for
// weighted sums, entry e reads row targets[e] of the value matrix.
struct Segments {
  std::vector<Index> offsets;
  std::vector<Index> targets;

  Index num_segments() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  Index num_entries() const { return offsets.empty() ? 0 : offsets.back(); }
};

struct Node;

class Expr {
 public:
  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  const Node& node() const { return *node_; }
  const Node* get() const { return node_.get(); }
  Index rows() const;
  Index cols() const;
  explicit operator bool() const { return node_ != nullptr; }

 private:
  std::shared_ptr<const Node> node_;
};

struct Node {
  Op op;
  Index rows;
  Index cols;
  std::vector<Expr> inputs;
  std::string name;                                  // Input
  std::shared_ptr<const Tensor> constant;            // Constant
  std::shared_ptr<const std::vector<Index>> index;   // GatherRows
  std::shared_ptr<const Segments> segments;          // segment ops
  double a = 0.0;                                    // slope / scale / lo / begin
  double b = 0.0;                                    // shift / hi
};

// ---- leaves ----
Expr input(std::string name, Index rows, Index cols);
Expr constant(Tensor value);
Expr constant(std::shared_ptr<const Tensor> value);

// ---- primitives ----
Expr matmul(const Expr& a, const Expr& b);
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr hadamard(const Expr& a, const Expr& b);
// x: n×c, bias: 1×c, added to every row.
Expr add_bias(const Expr& x, const Expr& bias);
// scale * x + shift, elementwise.
Expr affine(const Expr& x, double scale, double shift);
Expr concat_cols(const std::vector<Expr>& parts);
Expr slice_rows(const Expr& x, Index begin, Index count);
Expr slice_cols(const Expr& x, Index begin, Index count);
Expr gather_rows(const Expr& x, std::shared_ptr<const std::vector<Index>> rows);
Expr gather_rows(const Expr& x, std::vector<Index> rows);
Expr elu(const Expr& x);
Expr leaky_relu(const Expr& x, double slope = 0.2);
Expr sigmoid(const Expr& x);
Expr exp(const Expr& x);
Expr log(const Expr& x);
Expr clamp(const Expr& x, double lo, double hi);
Expr square(const Expr& x);
// Mean of all elements, 1×1.
Expr mean(const Expr& x);
// Column-wise softmax inside each segment of rows.
Expr segment_softmax(const Expr& logits, std::shared_ptr<const Segments> seg);
// out[i] = sum over e in segment i of weights[e] * values[targets[e]].
// weights: E×1, values: N×d, out: S×d.
Expr segment_weighted_sum(const Expr& weights, const Expr& values,
                          std::shared_ptr<const Segments> seg);
// log of the mean of exp over all elements, max-shifted. 1×1.
Expr log_mean_exp(const Expr& x);

inline Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
inline Expr operator-(const Expr& a, const Expr& b) { return sub(a, b); }
inline Expr operator*(double k, const Expr& x) { return affine(x, k, 0.0); }

// Name -> tensor table for input leaves. Tensors bound by const reference
// must outlive every evaluation that uses them.
class Bindings {
 public:
  Bindings& bind(const std::string& name, const Tensor& t);
  Bindings& bind_copy(const std::string& name, Tensor t);
  const Tensor* find(const std::string& name) const;

 private:
  std::map<std::string, const Tensor*> refs_;
  std::map<std::string, std::shared_ptr<const Tensor>> owned_;
};

using Gradients = std::map<std::string, Tensor>;

// Forward pass over the union of the given roots. Values of every reached
// node are retained so a backward pass can reuse them.
class Evaluation {
 public:
  Evaluation(std::span<const Expr> roots, const Bindings& bindings);
  Evaluation(const Expr& root, const Bindings& bindings)
      : Evaluation(std::span<const Expr>(&root, 1), bindings) {}

  const Tensor& value(const Expr& e) const;

  // Gradient of a scalar root with respect to the named inputs. Names that
  // the root does not depend on get zero tensors shaped like their binding.
  Gradients backward(const Expr& root, const std::set<std::string>& wrt) const;

 private:
  const Bindings& bindings_;
  std::vector<const Node*> order_;  // topological
  std::unordered_map<const Node*, Tensor> values_;
};

Tensor evaluate(const Expr& e, const Bindings& bindings);
Gradients gradient(const Expr& e, const Bindings& bindings, const std::set<std::string>& wrt);

}  // namespace cone::ad
