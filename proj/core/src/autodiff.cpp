#include "mate/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Core>

#include "mate/errors.hpp"
#include "mate/params.hpp"

namespace mate {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMat> mat_map(Tensor& t, std::size_t r, std::size_t c) {
  return {t.data().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

Eigen::Map<const RowMat> cmat_map(const Tensor& t, std::size_t r, std::size_t c) {
  return {t.data().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::MatMul: return "matmul";
    case Op::AddBias: return "add_bias";
    case Op::MulRows: return "mul_rows";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Reshape: return "reshape";
    case Op::GatherRows: return "gather_rows";
    case Op::ScatterAddRows: return "scatter_add_rows";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Square: return "square";
    case Op::Softmax: return "softmax";
    case Op::ReduceSum: return "reduce_sum";
    case Op::ReduceMean: return "reduce_mean";
    case Op::Norm: return "norm";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->node(id_).value; }
const Tensor& Var::grad() const { return tape_->node(id_).grad; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

// ---------------------------------------------------------------------------
// Tape

namespace {
// Gradients produced during one backward() sweep, before being folded into
// the persistent slots.
thread_local std::vector<std::optional<Tensor>>* g_pass = nullptr;
}  // namespace

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("non-finite leaf value");
  Node n;
  n.op = requires_grad ? Op::Leaf : Op::Constant;
  n.requires_grad = requires_grad && grad_enabled_;
  n.grad = Tensor(value.shape());
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::param(const ParamStore& store, std::size_t param_id) {
  auto it = param_nodes_.find(param_id);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = leaf(store.value(param_id), grad_enabled_);
  param_nodes_.emplace(param_id, v.id());
  return v;
}

Var Tape::record(Op op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  if (!value.all_finite()) {
    std::string msg = "non-finite value produced by " + std::string(op_name(op));
    if (!scope_.empty()) msg += " in " + scope_;
    throw NumericError(msg);
  }
  Node n;
  n.op = op;
  n.requires_grad = false;
  if (grad_enabled_) {
    for (auto p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  if (n.requires_grad) {
    n.backward = std::move(backward);
    n.parents = std::move(parents);
    n.grad = Tensor(value.shape());
  }
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  auto& slot = (*g_pass)[id];
  if (!slot) {
    slot = g;
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor& Tape::grad_slot(std::size_t id) { return nodes_[id].grad; }

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("backward: root belongs to a different tape");
  const Node& r = nodes_[root.id()];
  if (!r.value.shape().empty()) {
    throw ShapeError("backward: root must be a scalar, got shape " + shape_str(r.value.shape()));
  }
  std::vector<std::optional<Tensor>> pass(root.id() + 1);
  auto* saved = g_pass;
  g_pass = &pass;
  pass[root.id()] = Tensor::scalar(1.0);
  for (std::size_t k = root.id() + 1; k-- > 0;) {
    if (!pass[k]) continue;
    Node& n = nodes_[k];
    if (n.backward) n.backward(*this, k);
  }
  g_pass = saved;
  for (std::size_t k = 0; k < pass.size(); ++k) {
    if (!pass[k] || !nodes_[k].requires_grad) continue;
    auto dst = nodes_[k].grad.data();
    auto src = pass[k]->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.fill(0.0);
}

std::vector<Tensor> Tape::param_grads(const ParamStore& store) const {
  std::vector<Tensor> out;
  out.reserve(store.size());
  for (ParamId id = 0; id < store.size(); ++id) {
    auto it = param_nodes_.find(id);
    if (it != param_nodes_.end() && nodes_[it->second].requires_grad) {
      out.push_back(nodes_[it->second].grad);
    } else {
      out.emplace_back(store.value(id).shape());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Primitives

namespace ad {

namespace {

const Tensor& upstream(const Tape& t, std::size_t self) {
  (void)t;
  return *(*g_pass)[self];
}

void require_same_tape(const char* op, Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw Error(std::string(op) + ": operands belong to different tapes");
  }
}

void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(op, a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, dim = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.dim = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  return out;
}

template <typename F, typename G>
Var unary(Op op, Var a, F forward, G derivative_from_in_out) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = forward(x[i]);
  const std::size_t pa = a.id();
  return a.tape()->record(op, std::move(y), {pa}, [pa, derivative_from_in_out](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    const Tensor& in = t.node(pa).value;
    const Tensor& out = t.node(self).value;
    Tensor d(in.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * derivative_from_in_out(in[i], out[i]);
    t.accumulate(pa, d);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor y = a.value();
  auto yb = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += yb[i];
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape()->record(Op::Add, std::move(y), {pa, pb}, [pa, pb](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    t.accumulate(pa, g);
    t.accumulate(pb, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  auto yb = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= yb[i];
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape()->record(Op::Sub, std::move(y), {pa, pb}, [pa, pb](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    t.accumulate(pa, g);
    Tensor neg = g;
    for (auto& v : neg.data()) v = -v;
    t.accumulate(pb, neg);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  auto yb = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= yb[i];
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape()->record(Op::Mul, std::move(y), {pa, pb}, [pa, pb](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    const Tensor& va = t.node(pa).value;
    const Tensor& vb = t.node(pb).value;
    Tensor da(g.shape()), db(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i] = g[i] * vb[i];
      db[i] = g[i] * va[i];
    }
    t.accumulate(pa, da);
    t.accumulate(pb, db);
  });
}

Var scale(Var a, double c) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= c;
  const std::size_t pa = a.id();
  return a.tape()->record(Op::Scale, std::move(y), {pa}, [pa, c](Tape& t, std::size_t self) {
    Tensor d = upstream(t, self);
    for (auto& v : d.data()) v *= c;
    t.accumulate(pa, d);
  });
}

Var add_scalar(Var a, double c) {
  Tensor y = a.value();
  for (auto& v : y.data()) v += c;
  const std::size_t pa = a.id();
  return a.tape()->record(Op::AddScalar, std::move(y), {pa}, [pa](Tape& t, std::size_t self) {
    t.accumulate(pa, upstream(t, self));
  });
}

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor y(Shape{m, n});
  mat_map(y, m, n).noalias() = cmat_map(a.value(), m, k) * cmat_map(b.value(), k, n);
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape()->record(Op::MatMul, std::move(y), {pa, pb}, [pa, pb, m, k, n](Tape& t, std::size_t self) {
    const auto g = cmat_map(upstream(t, self), m, n);
    if (t.node(pa).requires_grad) {
      Tensor da(Shape{m, k});
      mat_map(da, m, k).noalias() = g * cmat_map(t.node(pb).value, k, n).transpose();
      t.accumulate(pa, da);
    }
    if (t.node(pb).requires_grad) {
      Tensor db(Shape{k, n});
      mat_map(db, k, n).noalias() = cmat_map(t.node(pa).value, m, k).transpose() * g;
      t.accumulate(pb, db);
    }
  });
}

Var add_bias(Var a, Var bias) {
  require_same_tape("add_bias", a, bias);
  require_rank("add_bias", a, 2);
  require_rank("add_bias", bias, 1);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  if (bias.shape()[0] != c) {
    throw ShapeError("add_bias: shape mismatch " + shape_str(a.shape()) + " + " + shape_str(bias.shape()));
  }
  Tensor y = a.value();
  const Tensor& vb = bias.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] += vb[j];
  const std::size_t pa = a.id(), pb = bias.id();
  return a.tape()->record(Op::AddBias, std::move(y), {pa, pb}, [pa, pb, r, c](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    t.accumulate(pa, g);
    if (t.node(pb).requires_grad) {
      Tensor db(Shape{c});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
      t.accumulate(pb, db);
    }
  });
}

Var mul_rows(Var a, Var w) {
  require_same_tape("mul_rows", a, w);
  require_rank("mul_rows", a, 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  if (w.value().size() != r) {
    throw ShapeError("mul_rows: shape mismatch " + shape_str(a.shape()) + " * " + shape_str(w.shape()));
  }
  Tensor y = a.value();
  const Tensor& vw = w.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] *= vw[i];
  const std::size_t pa = a.id(), pw = w.id();
  return a.tape()->record(Op::MulRows, std::move(y), {pa, pw}, [pa, pw, r, c](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    const Tensor& va = t.node(pa).value;
    const Tensor& vw = t.node(pw).value;
    Tensor da(Shape{r, c});
    Tensor dw(vw.shape());
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        da[i * c + j] = g[i * c + j] * vw[i];
        s += g[i * c + j] * va[i * c + j];
      }
      dw[i] = s;
    }
    t.accumulate(pa, da);
    t.accumulate(pw, dw);
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.empty()) throw ShapeError("concat: scalar input");
  Shape lead(s0.begin(), s0.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_same_tape("concat", parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != s0.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw ShapeError("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = shape_size(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor y(out_shape);
  std::vector<std::size_t> ids;
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&v[r * widths[p]], widths[p], &y[r * total + off]);
    off += widths[p];
    ids.push_back(parts[p].id());
  }
  return parts[0].tape()->record(Op::Concat, std::move(y), ids, [ids, widths, rows, total](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    std::size_t off = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (t.node(ids[p]).requires_grad) {
        Tensor d(t.node(ids[p]).value.shape());
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(&g[r * total + off], widths[p], &d[r * widths[p]]);
        t.accumulate(ids[p], d);
      }
      off += widths[p];
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_axis("slice", a.shape(), axis);
  if (begin > end || end > sp.dim) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t w = end - begin;
  Tensor y(out_shape);
  const Tensor& v = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(&v[(o * sp.dim + begin) * sp.inner], w * sp.inner, &y[o * w * sp.inner]);
  const std::size_t pa = a.id();
  return a.tape()->record(Op::Slice, std::move(y), {pa}, [pa, sp, begin, w](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    Tensor d(t.node(pa).value.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(&g[o * w * sp.inner], w * sp.inner, &d[(o * sp.dim + begin) * sp.inner]);
    t.accumulate(pa, d);
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t pa = a.id();
  return a.tape()->record(Op::Reshape, std::move(y), {pa}, [pa](Tape& t, std::size_t self) {
    t.accumulate(pa, upstream(t, self).reshaped(t.node(pa).value.shape()));
  });
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  if (a.shape().empty()) throw ShapeError("gather_rows: scalar input");
  const std::size_t rows = a.shape()[0];
  const std::size_t width = rows ? a.value().size() / rows : 0;
  Shape out_shape = a.shape();
  out_shape[0] = index.size();
  Tensor y(out_shape);
  const Tensor& v = a.value();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " out of range for " +
                       shape_str(a.shape()));
    }
    std::copy_n(&v[index[r] * width], width, &y[r * width]);
  }
  const std::size_t pa = a.id();
  return a.tape()->record(Op::GatherRows, std::move(y), {pa},
                          [pa, index = std::move(index), width](Tape& t, std::size_t self) {
                            const Tensor& g = upstream(t, self);
                            Tensor d(t.node(pa).value.shape());
                            for (std::size_t r = 0; r < index.size(); ++r)
                              for (std::size_t c = 0; c < width; ++c) d[index[r] * width + c] += g[r * width + c];
                            t.accumulate(pa, d);
                          });
}

Var scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t rows) {
  if (a.shape().empty()) throw ShapeError("scatter_add_rows: scalar input");
  if (index.size() != a.shape()[0]) {
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " +
                     shape_str(a.shape()));
  }
  const std::size_t width = index.empty() ? 0 : a.value().size() / index.size();
  Shape out_shape = a.shape();
  out_shape[0] = rows;
  Tensor y(out_shape);
  const Tensor& v = a.value();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= rows) throw ShapeError("scatter_add_rows: index out of range");
    for (std::size_t c = 0; c < width; ++c) y[index[r] * width + c] += v[r * width + c];
  }
  const std::size_t pa = a.id();
  return a.tape()->record(Op::ScatterAddRows, std::move(y), {pa},
                          [pa, index = std::move(index), width](Tape& t, std::size_t self) {
                            const Tensor& g = upstream(t, self);
                            Tensor d(t.node(pa).value.shape());
                            for (std::size_t r = 0; r < index.size(); ++r)
                              std::copy_n(&g[index[r] * width], width, &d[r * width]);
                            t.accumulate(pa, d);
                          });
}

Var tanh(Var a) {
  return unary(Op::Tanh, a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(Op::Sigmoid, a,
               [](double x) {
                 if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(Op::Relu, a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(Op::Exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(Op::Square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax(Var a, std::size_t axis) {
  const auto sp = split_axis("softmax", a.shape(), axis);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      auto at = [&](std::size_t d) { return (o * sp.dim + d) * sp.inner + in; };
      double mx = x[at(0)];
      for (std::size_t d = 1; d < sp.dim; ++d) mx = std::max(mx, x[at(d)]);
      double s = 0.0;
      for (std::size_t d = 0; d < sp.dim; ++d) s += (y[at(d)] = std::exp(x[at(d)] - mx));
      for (std::size_t d = 0; d < sp.dim; ++d) y[at(d)] /= s;
    }
  }
  const std::size_t pa = a.id();
  return a.tape()->record(Op::Softmax, std::move(y), {pa}, [pa, sp](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    const Tensor& y = t.node(self).value;
    Tensor d(y.shape());
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        auto at = [&](std::size_t k) { return (o * sp.dim + k) * sp.inner + in; };
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.dim; ++k) dot += g[at(k)] * y[at(k)];
        for (std::size_t k = 0; k < sp.dim; ++k) d[at(k)] = y[at(k)] * (g[at(k)] - dot);
      }
    }
    t.accumulate(pa, d);
  });
}

Var reduce_sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t pa = a.id();
  return a.tape()->record(Op::ReduceSum, Tensor::scalar(s), {pa}, [pa](Tape& t, std::size_t self) {
    t.accumulate(pa, Tensor(t.node(pa).value.shape(), upstream(t, self).item()));
  });
}

Var reduce_mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t pa = a.id();
  return a.tape()->record(Op::ReduceMean, Tensor::scalar(s / n), {pa}, [pa, n](Tape& t, std::size_t self) {
    t.accumulate(pa, Tensor(t.node(pa).value.shape(), upstream(t, self).item() / n));
  });
}

namespace {

Var reduce_axis(Op op, Var a, std::size_t axis, double factor) {
  const auto sp = split_axis(op_name(op).data(), a.shape(), axis);
  const Tensor& x = a.value();
  Tensor y(drop_axis(a.shape(), axis));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t d = 0; d < sp.dim; ++d)
      for (std::size_t in = 0; in < sp.inner; ++in) y[o * sp.inner + in] += x[(o * sp.dim + d) * sp.inner + in];
  for (auto& v : y.data()) v *= factor;
  const std::size_t pa = a.id();
  return a.tape()->record(op, std::move(y), {pa}, [pa, sp, factor](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    Tensor d(t.node(pa).value.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.dim; ++k)
        for (std::size_t in = 0; in < sp.inner; ++in) d[(o * sp.dim + k) * sp.inner + in] = g[o * sp.inner + in] * factor;
    t.accumulate(pa, d);
  });
}

}  // namespace

Var reduce_sum(Var a, std::size_t axis) { return reduce_axis(Op::ReduceSum, a, axis, 1.0); }

Var reduce_mean(Var a, std::size_t axis) {
  const auto sp = split_axis("reduce_mean", a.shape(), axis);
  return reduce_axis(Op::ReduceMean, a, axis, 1.0 / static_cast<double>(sp.dim));
}

Var norm(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  const double n = std::sqrt(s);
  const std::size_t pa = a.id();
  return a.tape()->record(Op::Norm, Tensor::scalar(n), {pa}, [pa, n](Tape& t, std::size_t self) {
    const double g = upstream(t, self).item();
    const Tensor& x = t.node(pa).value;
    Tensor d(x.shape());
    // Zero subgradient at the origin.
    if (n > 0.0)
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g * x[i] / n;
    t.accumulate(pa, d);
  });
}

Var norm(Var a, std::size_t axis) {
  const auto sp = split_axis("norm", a.shape(), axis);
  const Tensor& x = a.value();
  Tensor y(drop_axis(a.shape(), axis));
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t d = 0; d < sp.dim; ++d)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const double v = x[(o * sp.dim + d) * sp.inner + in];
        y[o * sp.inner + in] += v * v;
      }
  for (auto& v : y.data()) v = std::sqrt(v);
  const std::size_t pa = a.id();
  return a.tape()->record(Op::Norm, std::move(y), {pa}, [pa, sp](Tape& t, std::size_t self) {
    const Tensor& g = upstream(t, self);
    const Tensor& n = t.node(self).value;
    const Tensor& x = t.node(pa).value;
    Tensor d(x.shape());
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.dim; ++k)
        for (std::size_t in = 0; in < sp.inner; ++in) {
          const double nn = n[o * sp.inner + in];
          const std::size_t idx = (o * sp.dim + k) * sp.inner + in;
          if (nn > 0.0) d[idx] = g[o * sp.inner + in] * x[idx] / nn;
        }
    t.accumulate(pa, d);
  });
}

}  // namespace ad
}  // namespace mate
