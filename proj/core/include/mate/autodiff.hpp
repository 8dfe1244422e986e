#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mate/tensor.hpp"

namespace mate {

class ParamStore;
class Tape;

enum class Op {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  MatMul,
  AddBias,
  MulRows,
  Concat,
  Slice,
  Reshape,
  GatherRows,
  ScatterAddRows,
  Tanh,
  Sigmoid,
  Relu,
  Exp,
  Square,
  Softmax,
  ReduceSum,
  ReduceMean,
  Norm,
};

std::string_view op_name(Op op);

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Eager reverse-mode tape. Nodes are appended in evaluation order, so the
/// reverse of creation order is a valid topological order for backward().
///
/// Gradients accumulate: calling backward() twice without zero_grad() adds
/// the second pass on top of the first.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor value;
    Tensor grad;
    Op op = Op::Leaf;
    std::vector<std::size_t> parents;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);

  /// Parameter as a leaf node, created once per tape and reused on later calls.
  /// With gradients disabled the parameter is inserted as a constant.
  Var param(const ParamStore& store, std::size_t param_id);

  /// Record a computed node. Throws NumericError if `value` is not finite.
  Var record(Op op, Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  void backward(Var root);
  void zero_grad();

  /// Gradient per parameter id of `store` (zeros for parameters not on this tape).
  std::vector<Tensor> param_grads(const ParamStore& store) const;

  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  Node& node(std::size_t id) { return nodes_[id]; }

  /// Adds `g` into the gradient slot of `id` if it participates in differentiation.
  void accumulate(std::size_t id, const Tensor& g);
  Tensor& grad_slot(std::size_t id);

  /// Label attached to numeric errors raised while it is active.
  class Scope {
   public:
    Scope(Tape& tape, std::string label) : tape_(tape), saved_(std::move(tape.scope_)) {
      tape_.scope_ = std::move(label);
    }
    ~Scope() { tape_.scope_ = std::move(saved_); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape& tape_;
    std::string saved_;
  };

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
  std::string scope_;
};

namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
/// a[R][C] + bias[C] on every row.
Var add_bias(Var a, Var bias);
/// a[R][C] * w[R] (each row scaled by its weight).
Var mul_rows(Var a, Var w);
/// Concatenate along the last axis; leading dimensions must agree.
Var concat(const std::vector<Var>& parts);
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);
/// out[r] = a[index[r]] along axis 0.
Var gather_rows(Var a, std::vector<std::size_t> index);
/// out[index[r]] += a[r] along axis 0; output has `rows` rows.
Var scatter_add_rows(Var a, std::vector<std::size_t> index, std::size_t rows);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var square(Var a);
Var softmax(Var a, std::size_t axis);
Var reduce_sum(Var a);
Var reduce_sum(Var a, std::size_t axis);
Var reduce_mean(Var a);
Var reduce_mean(Var a, std::size_t axis);
/// Euclidean norm of the whole tensor (scalar).
Var norm(Var a);
/// Euclidean norm along one axis; the axis is removed from the shape.
Var norm(Var a, std::size_t axis);

}  // namespace ad

inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }
inline Var operator*(Var a, Var b) { return ad::mul(a, b); }
inline Var operator*(double c, Var a) { return ad::scale(a, c); }

}  // namespace mate
