#pragma once

// Reverse-mode automatic differentiation over hytas::Tensor.
//
// A Tape records primitive applications in execution order. Each recorded node
// owns its forward value and a backward rule; backward() walks the tape in
// reverse and accumulates input gradients. Tapes are single-owner: give every
// worker its own tape.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hytas/tensor.hpp"

namespace hytas {

class Tape;
class GradientMap;

class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardArgs {
  const Tensor& out;
  const Tensor& grad_out;
  std::span<const Tensor* const> in;
  // nullptr for inputs that do not require a gradient.
  std::span<Tensor* const> grad_in;
};

class Tape {
 public:
  using BackwardFn = std::function<void(const BackwardArgs&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Keep the gradient of an intermediate node in the map returned by backward().
  void retain_grad(Var v);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend GradientMap backward(Tape& tape, Var loss);

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    const char* op = "leaf";
    bool requires_grad = false;
    bool is_leaf = true;
    bool retain = false;
  };

  std::deque<Node> nodes_;
};

class GradientMap {
 public:
  // Gradient for a requires_grad leaf or a retained node. Leaves that the loss
  // does not reach get a zero tensor.
  const Tensor& operator[](Var v) const;
  bool contains(Var v) const { return grads_.contains(v.id()); }

 private:
  friend GradientMap backward(Tape& tape, Var loss);
  std::unordered_map<std::size_t, Tensor> grads_;
};

// Reverse sweep from a scalar loss. Throws ContractError for a non-scalar or
// non-finite loss and NumericError naming the primitive if a NaN/Inf appears.
GradientMap backward(Tape& tape, Var loss);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

// ---------------------------------------------------------------------------
// Primitives. Shapes must match exactly, except that the second operand of
// add/mul and matmul may omit leading batch dimensions of the first.

Var matmul(Var a, Var b);
// y = x W^T + b with W stored (out, in). bias may be an invalid Var.
Var linear(Var x, Var weight, Var bias);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var transpose_last_two(Var a);
Var permute(Var a, std::vector<std::size_t> axes);
Var reshape(Var a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
// (S...) -> (count, S...)
Var expand_leading(Var a, std::size_t count);
Var softmax(Var a);
// Scaled dot-product self-attention over a fused (B, T, 3*H*hd) projection laid
// out as [q | k | v], each head-major. Returns (B, T, H*hd).
Var attention(Var qkv, std::size_t heads, std::size_t head_dim);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var a);
Var mean(Var a, std::size_t axis);
Var sum(Var a);
// Mean over the batch of -log softmax(logits)[label]; logits is (B, C).
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace hytas
