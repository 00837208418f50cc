#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embreg/rng.hpp"
#include "embreg/tensor.hpp"

namespace embreg {

/// A named, persistent tensor owned by a model. Graphs read its value and
/// accumulate into its grad on backward().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool is_trainable = true);
  void zero_grad();
};

enum class OpKind : std::uint8_t {
  Constant,
  Leaf,
  Param,
  MatMul,
  MatMulNT,
  Add,
  Mul,
  Affine,
  Concat,
  Slice,
  Tanh,
  Sigmoid,
  Relu,
  Exp,
  Log,
  Sum,
  Mean,
  Embedding,
  Softmax,
  Cosine,
  Dropout,
  Reshape,
  Transpose,
  TileRows,
  WeightedSum,
  Pick,
};

std::string_view op_name(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Graph* graph() const { return graph_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

enum class ZeroNormPolicy { Throw, ZeroCosine };

/// Tape of primitive applications in creation (= topological) order.
/// Single-threaded; build one per forward pass.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  explicit Graph(bool record_gradients = true) : record_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  Var leaf(Tensor t, bool requires_grad = true);
  // Registers a parameter once per graph; later calls return the same node.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].value; }
  // Gradient of the last backward() loss w.r.t. v, or nullptr if none flowed.
  const Tensor* grad(Var v) const;

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  bool recording() const { return record_; }

  // Creates a node. inputs must already exist; backward is dropped when no
  // input requires a gradient.
  Var push(OpKind kind, std::vector<int> inputs, Tensor value, BackwardFn backward);
  bool needs_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id())].requires_grad; }
  // Gradient buffer of a node, zero-allocated on first use.
  Tensor& grad_buffer(int id);

  // ReLU activation signature, recorded only when enabled (used by grad_check).
  void track_relu_pattern(bool on) { track_relu_ = on; }
  bool tracking_relu() const { return track_relu_; }
  std::vector<std::uint8_t>& relu_pattern() { return relu_pattern_; }

  // Rows that hit the zero-norm fallback of cosine_similarity.
  std::size_t zero_norm_rows() const { return zero_norm_rows_; }
  void add_zero_norm_rows(std::size_t n) { zero_norm_rows_ += n; }

 private:
  bool record_;
  bool track_relu_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  std::vector<std::uint8_t> relu_pattern_;
  std::size_t zero_norm_rows_ = 0;
};

// ---- primitives -----------------------------------------------------------
// 2-D semantics throughout; a rank-1 tensor of length n behaves as a [1, n] row.

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T, i.e. a linear layer with W stored [out, in]
// Elementwise with broadcasting: each dimension must match or be 1.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var affine(Var a, double scale, double shift);  // scale * a + shift
Var sub(Var a, Var b);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var exp(Var x);
// log(max(x, 1e-12))
Var log(Var x);
Var sum(Var x);
Var mean(Var x);
Var embedding(Var table, std::span<const int> ids);
// Row-wise softmax; mask (same shape, 1 = keep) forces masked entries to 0.
Var softmax(Var x);
Var softmax(Var x, const Tensor& mask);
// Row-wise cosine similarity of two [r, d] inputs; result is [r, 1].
Var cosine_similarity(Var a, Var b, ZeroNormPolicy policy = ZeroNormPolicy::Throw);
// Inverted dropout; identity when !train or rate == 0.
Var dropout(Var x, double rate, Rng& rng, bool train);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
// [B, d] -> [times*B, d], row r is x[r mod B].
Var tile_rows(Var x, std::size_t times);
// alpha [B, n], stacked [n*B, d] with row i*B+b -> out[b] = sum_i alpha[b,i] * stacked[i*B+b].
Var weighted_sum(Var alpha, Var stacked);
// x [r, v] -> [r, 1] with out[i] = x[i, ids[i]].
Var pick(Var x, std::span<const int> ids);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- gradient checking ------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<std::size_t> excluded;  // coordinates straddling a ReLU kink
};

using ScalarFn = std::function<Var(Graph&, Var)>;
using ParamLossFn = std::function<Var(Graph&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double step = 1e-6);

/// Same measure over every coordinate of the given parameters (flattened in order).
GradCheckResult grad_check_params(const ParamLossFn& f, std::span<Parameter* const> params,
                                  double step = 1e-6);

}  // namespace embreg
