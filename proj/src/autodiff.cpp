#include "embreg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "embreg/errors.hpp"
#include "embreg/kernels.hpp"

namespace embreg {

Parameter::Parameter(std::string n, Tensor v, bool is_trainable)
    : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(is_trainable) {}

void Parameter::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape);
  grad.fill(0.0);
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Constant: return "constant";
    case OpKind::Leaf: return "leaf";
    case OpKind::Param: return "param";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Affine: return "affine";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Embedding: return "embedding";
    case OpKind::Softmax: return "softmax";
    case OpKind::Cosine: return "cosine_similarity";
    case OpKind::Dropout: return "dropout";
    case OpKind::Reshape: return "reshape";
    case OpKind::Transpose: return "transpose";
    case OpKind::TileRows: return "tile_rows";
    case OpKind::WeightedSum: return "weighted_sum";
    case OpKind::Pick: return "pick";
  }
  return "?";
}

const Tensor& Var::value() const { return graph_->value(*this); }

// ---- Graph ------------------------------------------------------------------

Var Graph::constant(Tensor t) { return push(OpKind::Constant, {}, std::move(t), nullptr); }

Var Graph::leaf(Tensor t, bool requires_grad) {
  nodes_.push_back(Node{OpKind::Leaf, {}, std::move(t), {}, record_ && requires_grad, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{OpKind::Param, {}, p.value, {}, record_ && p.trainable, &p, nullptr});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::push(OpKind kind, std::vector<int> inputs, Tensor value, BackwardFn backward) {
  bool rg = false;
  if (record_)
    for (int in : inputs) rg = rg || nodes_[static_cast<std::size_t>(in)].requires_grad;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), {}, rg, nullptr,
                        rg ? std::move(backward) : BackwardFn{}});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

const Tensor* Graph::grad(Var v) const {
  const auto& n = nodes_[static_cast<std::size_t>(v.id())];
  return n.grad.data.empty() && !n.value.data.empty() ? nullptr : &n.grad;
}

Tensor& Graph::grad_buffer(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::invalid_argument("backward: loss belongs to another graph");
  const auto& ln = nodes_[static_cast<std::size_t>(loss.id())];
  if (ln.value.size() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(ln.value.shape));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!ln.requires_grad) return;
  grad_buffer(loss.id()).data[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr && n.param->trainable) {
      auto& pg = n.param->grad;
      if (pg.shape != n.value.shape) pg = Tensor(n.value.shape);
      for (std::size_t i = 0; i < pg.size(); ++i) pg.data[i] += n.grad.data[i];
    }
  }
}

// ---- helpers ----------------------------------------------------------------

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph() == nullptr || a.graph() != b.graph()) throw std::invalid_argument("operands from different graphs");
  return *a.graph();
}

struct Dims {
  std::size_t r, c;
};

Dims dims(const Tensor& t) { return {t.rows(), t.cols()}; }

// Output shape for broadcasting a and b. Rank-1 stays rank-1 only when both are.
Shape broadcast_shape(const Tensor& a, const Tensor& b, Dims& out) {
  const Dims da = dims(a), db = dims(b);
  auto pick_dim = [](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    return 0;
  };
  out.r = pick_dim(da.r, db.r);
  out.c = pick_dim(da.c, db.c);
  if (out.r == 0 || out.c == 0)
    throw std::invalid_argument("cannot broadcast " + shape_str(a.shape) + " with " + shape_str(b.shape));
  if (a.rank() <= 1 && b.rank() <= 1 && out.r == 1) return Shape{out.c};
  return Shape{out.r, out.c};
}

inline std::size_t bidx(const Dims& d, std::size_t r, std::size_t c) {
  return (d.r == 1 ? 0 : r) * d.c + (d.c == 1 ? 0 : c);
}

template <typename F, typename DF>
Var unary(Var x, OpKind kind, F f, DF df) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = f(xv.data[i]);
  const int xid = x.id();
  return g.push(kind, {xid}, std::move(out), [xid, df](Graph& gr, int self) {
    const auto& n = gr.node(self);
    const auto& in = gr.node(xid);
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += n.grad.data[i] * df(in.value.data[i], n.value.data[i]);
  });
}

}  // namespace

// ---- primitives -------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) throw std::invalid_argument("matmul: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
  Tensor out(Shape{m, n});
  kernels::gemm_nn(m, k, n, av.data.data(), bv.data.data(), out.data.data(), false);
  const int aid = a.id(), bid = b.id();
  return g.push(OpKind::MatMul, {aid, bid}, std::move(out), [aid, bid, m, k, n](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (gr.node(aid).requires_grad)  // dA = dC B^T
      kernels::gemm_nt(m, n, k, go.data.data(), gr.node(bid).value.data.data(), gr.grad_buffer(aid).data.data(), true);
    if (gr.node(bid).requires_grad)  // dB = A^T dC
      kernels::gemm_tn(k, m, n, gr.node(aid).value.data.data(), go.data.data(), gr.grad_buffer(bid).data.data(), true);
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k)
    throw std::invalid_argument("matmul_nt: " + shape_str(av.shape) + " x " + shape_str(bv.shape) + "^T");
  Tensor out(Shape{m, n});
  kernels::gemm_nt(m, k, n, av.data.data(), bv.data.data(), out.data.data(), false);
  const int aid = a.id(), bid = b.id();
  return g.push(OpKind::MatMulNT, {aid, bid}, std::move(out), [aid, bid, m, k, n](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    if (gr.node(aid).requires_grad)  // dA = dC B
      kernels::gemm_nn(m, n, k, go.data.data(), gr.node(bid).value.data.data(), gr.grad_buffer(aid).data.data(), true);
    if (gr.node(bid).requires_grad)  // dB = dC^T A
      kernels::gemm_tn(n, m, k, go.data.data(), gr.node(aid).value.data.data(), gr.grad_buffer(bid).data.data(), true);
  });
}

namespace {
template <bool IsMul>
Var binary_elementwise(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Dims od{};
  Shape shape = broadcast_shape(av, bv, od);
  const Dims da = dims(av), db = dims(bv);
  Tensor out(shape);
  for (std::size_t r = 0; r < od.r; ++r)
    for (std::size_t c = 0; c < od.c; ++c) {
      const double x = av.data[bidx(da, r, c)], y = bv.data[bidx(db, r, c)];
      out.data[r * od.c + c] = IsMul ? x * y : x + y;
    }
  const int aid = a.id(), bid = b.id();
  return g.push(IsMul ? OpKind::Mul : OpKind::Add, {aid, bid}, std::move(out),
                [aid, bid, od, da, db](Graph& gr, int self) {
                  const Tensor& go = gr.node(self).grad;
                  if (gr.node(aid).requires_grad) {
                    Tensor& ga = gr.grad_buffer(aid);
                    const Tensor& bval = gr.node(bid).value;
                    for (std::size_t r = 0; r < od.r; ++r)
                      for (std::size_t c = 0; c < od.c; ++c) {
                        const double gv = go.data[r * od.c + c];
                        ga.data[bidx(da, r, c)] += IsMul ? gv * bval.data[bidx(db, r, c)] : gv;
                      }
                  }
                  if (gr.node(bid).requires_grad) {
                    Tensor& gb = gr.grad_buffer(bid);
                    const Tensor& aval = gr.node(aid).value;
                    for (std::size_t r = 0; r < od.r; ++r)
                      for (std::size_t c = 0; c < od.c; ++c) {
                        const double gv = go.data[r * od.c + c];
                        gb.data[bidx(db, r, c)] += IsMul ? gv * aval.data[bidx(da, r, c)] : gv;
                      }
                  }
                });
}
}  // namespace

Var add(Var a, Var b) { return binary_elementwise<false>(a, b); }
Var mul(Var a, Var b) { return binary_elementwise<true>(a, b); }

Var affine(Var a, double scale, double shift) {
  return unary(
      a, OpKind::Affine, [scale, shift](double x) { return scale * x + shift; },
      [scale](double, double) { return scale; });
}

Var sub(Var a, Var b) { return add(a, affine(b, -1.0, 0.0)); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  if (axis > 1) throw std::invalid_argument("concat axis must be 0 or 1");
  Graph& g = *parts[0].graph();
  std::vector<int> ids;
  std::vector<Dims> ds;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw std::invalid_argument("concat operands from different graphs");
    ids.push_back(p.id());
    ds.push_back(dims(p.value()));
  }
  Shape shape;
  if (axis == 0) {
    std::size_t rows = 0;
    for (const auto& d : ds) {
      if (d.c != ds[0].c) throw std::invalid_argument("concat axis 0: column mismatch");
      rows += d.r;
    }
    shape = {rows, ds[0].c};
  } else {
    std::size_t cols = 0;
    bool all_vec = true;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (ds[i].r != ds[0].r) throw std::invalid_argument("concat axis 1: row mismatch");
      cols += ds[i].c;
      all_vec = all_vec && parts[i].value().rank() <= 1;
    }
    shape = all_vec ? Shape{cols} : Shape{ds[0].r, cols};
  }
  Tensor out(shape);
  const std::size_t out_cols = axis == 0 ? ds[0].c : shape.back();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& v = parts[i].value();
    for (std::size_t r = 0; r < ds[i].r; ++r)
      for (std::size_t c = 0; c < ds[i].c; ++c) {
        if (axis == 0)
          out.data[(offset + r) * out_cols + c] = v.data[r * ds[i].c + c];
        else
          out.data[r * out_cols + offset + c] = v.data[r * ds[i].c + c];
      }
    offset += axis == 0 ? ds[i].r : ds[i].c;
  }
  return g.push(OpKind::Concat, ids, std::move(out), [ids, ds, axis, out_cols](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    std::size_t off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (gr.node(ids[i]).requires_grad) {
        Tensor& gi = gr.grad_buffer(ids[i]);
        for (std::size_t r = 0; r < ds[i].r; ++r)
          for (std::size_t c = 0; c < ds[i].c; ++c)
            gi.data[r * ds[i].c + c] +=
                axis == 0 ? go.data[(off + r) * out_cols + c] : go.data[r * out_cols + off + c];
      }
      off += axis == 0 ? ds[i].r : ds[i].c;
    }
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Dims d = dims(xv);
  if (axis > 1) throw std::invalid_argument("slice axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? d.r : d.c;
  if (begin >= end || end > extent)
    throw std::invalid_argument("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                shape_str(xv.shape));
  const std::size_t orows = axis == 0 ? end - begin : d.r;
  const std::size_t ocols = axis == 1 ? end - begin : d.c;
  Shape shape = (xv.rank() <= 1 && axis == 1) ? Shape{ocols} : Shape{orows, ocols};
  Tensor out(shape);
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) out.data[r * ocols + c] = xv.data[(r0 + r) * d.c + c0 + c];
  const int xid = x.id();
  return g.push(OpKind::Slice, {xid}, std::move(out), [xid, d, r0, c0, orows, ocols](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t r = 0; r < orows; ++r)
      for (std::size_t c = 0; c < ocols; ++c) gx.data[(r0 + r) * d.c + c0 + c] += go.data[r * ocols + c];
  });
}

Var tanh(Var x) {
  return unary(
      x, OpKind::Tanh, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x, OpKind::Sigmoid,
      [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  Graph& g = *x.graph();
  if (g.tracking_relu()) {
    auto& pat = g.relu_pattern();
    for (double v : x.value().data) pat.push_back(v > 0.0 ? 1 : 0);
  }
  // Subgradient at 0 is 0.
  return unary(
      x, OpKind::Relu, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var x) {
  return unary(
      x, OpKind::Exp, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  static constexpr double kFloor = 1e-12;
  return unary(
      x, OpKind::Log, [](double v) { return std::log(std::max(v, kFloor)); },
      [](double v, double) { return v > kFloor ? 1.0 / v : 0.0; });
}

Var sum(Var x) {
  Graph& g = *x.graph();
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  const int xid = x.id();
  return g.push(OpKind::Sum, {xid}, Tensor::scalar(acc), [xid](Graph& gr, int self) {
    const double go = gr.node(self).grad.data[0];
    for (auto& v : gr.grad_buffer(xid).data) v += go;
  });
}

Var mean(Var x) {
  Graph& g = *x.graph();
  const std::size_t n = x.value().size();
  if (n == 0) throw std::invalid_argument("mean of empty tensor");
  double acc = 0.0;
  for (double v : x.value().data) acc += v;
  const int xid = x.id();
  return g.push(OpKind::Mean, {xid}, Tensor::scalar(acc / static_cast<double>(n)), [xid, n](Graph& gr, int self) {
    const double go = gr.node(self).grad.data[0] / static_cast<double>(n);
    for (auto& v : gr.grad_buffer(xid).data) v += go;
  });
}

Var embedding(Var table, std::span<const int> ids) {
  Graph& g = *table.graph();
  const Tensor& tv = table.value();
  const std::size_t rows = tv.rows(), d = tv.cols();
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out(Shape{idv.size(), d});
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= rows)
      throw std::out_of_range("embedding id " + std::to_string(idv[i]) + " outside table of " + std::to_string(rows));
    std::copy_n(tv.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(idv[i]) * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const int tid = table.id();
  return g.push(OpKind::Embedding, {tid}, std::move(out), [tid, idv, d](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gt = gr.grad_buffer(tid);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) gt.data[static_cast<std::size_t>(idv[i]) * d + c] += go.data[i * d + c];
  });
}

namespace {
Var softmax_impl(Var x, const Tensor* mask) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Dims d = dims(xv);
  if (xv.size() == 0) throw std::invalid_argument("softmax of empty tensor");
  if (!xv.all_finite()) throw NumericError("softmax: non-finite input");
  if (mask != nullptr && mask->size() != xv.size())
    throw std::invalid_argument("softmax mask shape " + shape_str(mask->shape) + " vs " + shape_str(xv.shape));
  Tensor out(xv.shape);
  for (std::size_t r = 0; r < d.r; ++r) {
    const double* in = xv.data.data() + r * d.c;
    double* o = out.data.data() + r * d.c;
    auto keep = [&](std::size_t c) { return mask == nullptr || mask->data[r * d.c + c] != 0.0; };
    double mx = -INFINITY;
    for (std::size_t c = 0; c < d.c; ++c)
      if (keep(c)) mx = std::max(mx, in[c]);
    if (mx == -INFINITY) throw NumericError("softmax: every position of row " + std::to_string(r) + " is masked");
    double z = 0.0;
    for (std::size_t c = 0; c < d.c; ++c) {
      o[c] = keep(c) ? std::exp(in[c] - mx) : 0.0;
      z += o[c];
    }
    for (std::size_t c = 0; c < d.c; ++c) o[c] /= z;
  }
  const int xid = x.id();
  return g.push(OpKind::Softmax, {xid}, std::move(out), [xid, d](Graph& gr, int self) {
    const auto& n = gr.node(self);
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t r = 0; r < d.r; ++r) {
      const double* y = n.value.data.data() + r * d.c;
      const double* gy = n.grad.data.data() + r * d.c;
      double dot = 0.0;
      for (std::size_t c = 0; c < d.c; ++c) dot += y[c] * gy[c];
      for (std::size_t c = 0; c < d.c; ++c) gx.data[r * d.c + c] += y[c] * (gy[c] - dot);
    }
  });
}
}  // namespace

Var softmax(Var x) { return softmax_impl(x, nullptr); }
Var softmax(Var x, const Tensor& mask) { return softmax_impl(x, &mask); }

Var cosine_similarity(Var a, Var b, ZeroNormPolicy policy) {
  constexpr double kEps = 1e-8;
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Dims d = dims(av);
  if (dims(bv).r != d.r || dims(bv).c != d.c)
    throw std::invalid_argument("cosine_similarity: " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  std::vector<double> na(d.r), nb(d.r);
  std::vector<std::uint8_t> degenerate(d.r, 0);
  Tensor out(av.rank() <= 1 ? Shape{1} : Shape{d.r, 1});
  std::size_t zero_rows = 0;
  for (std::size_t r = 0; r < d.r; ++r) {
    double dot = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < d.c; ++c) {
      const double x = av.data[r * d.c + c], y = bv.data[r * d.c + c];
      dot += x * y;
      aa += x * x;
      bb += y * y;
    }
    na[r] = std::sqrt(aa);
    nb[r] = std::sqrt(bb);
    if (na[r] < kEps || nb[r] < kEps) {
      if (policy == ZeroNormPolicy::Throw)
        throw NearZeroNorm("cosine_similarity: operand norm below 1e-8 in row " + std::to_string(r));
      degenerate[r] = 1;
      ++zero_rows;
      out.data[r] = 0.0;
      continue;
    }
    out.data[r] = std::clamp(dot / (na[r] * nb[r]), -1.0, 1.0);
  }
  g.add_zero_norm_rows(zero_rows);
  const int aid = a.id(), bid = b.id();
  return g.push(OpKind::Cosine, {aid, bid}, std::move(out), [aid, bid, d, na, nb, degenerate](Graph& gr, int self) {
    const auto& n = gr.node(self);
    const Tensor& aval = gr.node(aid).value;
    const Tensor& bval = gr.node(bid).value;
    const bool ga_on = gr.node(aid).requires_grad, gb_on = gr.node(bid).requires_grad;
    for (std::size_t r = 0; r < d.r; ++r) {
      if (degenerate[r]) continue;
      const double go = n.grad.data[r];
      // Unclamped cosine for the derivative.
      double dot = 0.0;
      for (std::size_t c = 0; c < d.c; ++c) dot += aval.data[r * d.c + c] * bval.data[r * d.c + c];
      const double cosv = dot / (na[r] * nb[r]);
      for (std::size_t c = 0; c < d.c; ++c) {
        const double x = aval.data[r * d.c + c], y = bval.data[r * d.c + c];
        if (ga_on) gr.grad_buffer(aid).data[r * d.c + c] += go * (y / (na[r] * nb[r]) - cosv * x / (na[r] * na[r]));
        if (gb_on) gr.grad_buffer(bid).data[r * d.c + c] += go * (x / (na[r] * nb[r]) - cosv * y / (nb[r] * nb[r]));
      }
    }
  });
}

Var dropout(Var x, double rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(xv.size());
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out.data[i] = xv.data[i] * mask[i];
  }
  const int xid = x.id();
  return g.push(OpKind::Dropout, {xid}, std::move(out), [xid, mask = std::move(mask)](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t i = 0; i < mask.size(); ++i) gx.data[i] += go.data[i] * mask[i];
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = *x.graph();
  if (shape_numel(shape) != x.value().size())
    throw std::invalid_argument("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor out(std::move(shape), x.value().data);
  const int xid = x.id();
  return g.push(OpKind::Reshape, {xid}, std::move(out), [xid](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t i = 0; i < go.size(); ++i) gx.data[i] += go.data[i];
  });
}

Var transpose(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Dims d = dims(xv);
  Tensor out(Shape{d.c, d.r});
  for (std::size_t r = 0; r < d.r; ++r)
    for (std::size_t c = 0; c < d.c; ++c) out.data[c * d.r + r] = xv.data[r * d.c + c];
  const int xid = x.id();
  return g.push(OpKind::Transpose, {xid}, std::move(out), [xid, d](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t r = 0; r < d.r; ++r)
      for (std::size_t c = 0; c < d.c; ++c) gx.data[r * d.c + c] += go.data[c * d.r + r];
  });
}

Var tile_rows(Var x, std::size_t times) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Dims d = dims(xv);
  if (times == 0) throw std::invalid_argument("tile_rows: times must be >= 1");
  Tensor out(Shape{times * d.r, d.c});
  for (std::size_t t = 0; t < times; ++t)
    std::copy(xv.data.begin(), xv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t * d.r * d.c));
  const int xid = x.id();
  return g.push(OpKind::TileRows, {xid}, std::move(out), [xid, d, times](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t t = 0; t < times; ++t)
      for (std::size_t i = 0; i < d.r * d.c; ++i) gx.data[i] += go.data[t * d.r * d.c + i];
  });
}

Var weighted_sum(Var alpha, Var stacked) {
  Graph& g = same_graph(alpha, stacked);
  const Tensor& av = alpha.value();
  const Tensor& sv = stacked.value();
  const std::size_t batch = av.rows(), n = av.cols(), width = sv.cols();
  if (sv.rows() != n * batch)
    throw std::invalid_argument("weighted_sum: alpha " + shape_str(av.shape) + " vs stacked " + shape_str(sv.shape));
  Tensor out(Shape{batch, width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const double w = av.data[b * n + i];
      const double* row = sv.data.data() + (i * batch + b) * width;
      for (std::size_t c = 0; c < width; ++c) out.data[b * width + c] += w * row[c];
    }
  const int aid = alpha.id(), sid = stacked.id();
  return g.push(OpKind::WeightedSum, {aid, sid}, std::move(out), [aid, sid, batch, n, width](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    const Tensor& aval = gr.node(aid).value;
    const Tensor& sval = gr.node(sid).value;
    const bool ga_on = gr.node(aid).requires_grad, gs_on = gr.node(sid).requires_grad;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t row = (i * batch + b) * width;
        if (ga_on) {
          double dot = 0.0;
          for (std::size_t c = 0; c < width; ++c) dot += go.data[b * width + c] * sval.data[row + c];
          gr.grad_buffer(aid).data[b * n + i] += dot;
        }
        if (gs_on) {
          Tensor& gs = gr.grad_buffer(sid);
          const double w = aval.data[b * n + i];
          for (std::size_t c = 0; c < width; ++c) gs.data[row + c] += w * go.data[b * width + c];
        }
      }
  });
}

Var pick(Var x, std::span<const int> ids) {
  Graph& g = *x.graph();
  const Tensor& xv = x.value();
  const Dims d = dims(xv);
  if (ids.size() != d.r)
    throw std::invalid_argument("pick: " + std::to_string(ids.size()) + " ids for " + std::to_string(d.r) + " rows");
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out(Shape{d.r, 1});
  for (std::size_t r = 0; r < d.r; ++r) {
    if (idv[r] < 0 || static_cast<std::size_t>(idv[r]) >= d.c)
      throw std::out_of_range("pick: id " + std::to_string(idv[r]) + " outside " + std::to_string(d.c) + " columns");
    out.data[r] = xv.data[r * d.c + static_cast<std::size_t>(idv[r])];
  }
  const int xid = x.id();
  return g.push(OpKind::Pick, {xid}, std::move(out), [xid, idv, d](Graph& gr, int self) {
    const Tensor& go = gr.node(self).grad;
    Tensor& gx = gr.grad_buffer(xid);
    for (std::size_t r = 0; r < d.r; ++r) gx.data[r * d.c + static_cast<std::size_t>(idv[r])] += go.data[r];
  });
}

// ---- gradient checking ------------------------------------------------------

namespace {

struct Probe {
  double value;
  std::vector<std::uint8_t> pattern;
};

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double step) {
  Tensor analytic;
  {
    Graph g;
    Var xv = g.leaf(x);
    Var loss = f(g, xv);
    g.backward(loss);
    const Tensor* gx = g.grad(xv);
    analytic = gx ? *gx : Tensor(x.shape);
  }
  auto probe = [&](const Tensor& at) {
    Graph g(false);
    g.track_relu_pattern(true);
    Var xv = g.leaf(at, false);
    Var loss = f(g, xv);
    return Probe{loss.value().item(), g.relu_pattern()};
  };
  GradCheckResult res;
  Tensor work = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double hi = x.data[i] + step, lo = x.data[i] - step;
    work.data[i] = hi;
    const Probe plus = probe(work);
    work.data[i] = lo;
    const Probe minus = probe(work);
    work.data[i] = x.data[i];
    if (plus.pattern != minus.pattern) {
      res.excluded.push_back(i);
      continue;
    }
    // Divide by the step actually realized in floating point.
    const double numeric = (plus.value - minus.value) / (hi - lo);
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic.data[i], numeric));
    ++res.checked;
  }
  return res;
}

GradCheckResult grad_check_params(const ParamLossFn& f, std::span<Parameter* const> params, double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var loss = f(g);
    g.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);
  auto probe = [&]() {
    Graph g(false);
    g.track_relu_pattern(true);
    Var loss = f(g);
    return Probe{loss.value().item(), g.relu_pattern()};
  };
  GradCheckResult res;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i, ++flat) {
      if (!p.trainable) continue;
      const double orig = p.value.data[i];
      const double hi = orig + step, lo = orig - step;
      p.value.data[i] = hi;
      const Probe plus = probe();
      p.value.data[i] = lo;
      const Probe minus = probe();
      p.value.data[i] = orig;
      if (plus.pattern != minus.pattern) {
        res.excluded.push_back(flat);
        continue;
      }
      const double numeric = (plus.value - minus.value) / (hi - lo);
      res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic[k].data[i], numeric));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace embreg
