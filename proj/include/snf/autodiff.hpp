#pragma once

// Tape-free reverse-mode differentiation over rank-2 tensors.
//
// Every operation returns a Var whose node remembers its parents and a
// closure that pushes the incoming gradient back to them. Calling
// backward() on a scalar walks the graph in reverse topological order.
// Leaves created with requires_grad=false (constants, frozen weights)
// never allocate or accumulate a gradient, but gradients still flow
// *through* any intermediate result that depends on a trainable leaf.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "snf/tensor.hpp"

namespace snf {

struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad);
  static Var from_node(std::shared_ptr<Node> node) { return Var(std::move(node)); }

  const Tensor& value() const { return node_->value; }
  /// Optimizers mutate leaf values in place between graph constructions.
  Tensor& mutable_value() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Runs reverse-mode accumulation from a 1×1 loss into every reachable
/// leaf that requires a gradient. Throws ContractError for non-scalar loss.
void backward(const Var& loss);

namespace ops {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// Adds a 1×n row to every row of an m×n matrix.
Var add_row(const Var& a, const Var& row);
/// Multiplies every entry of `a` by the 1×1 value `s`.
Var mul_scalar(const Var& a, const Var& s);

/// Row-wise softmax with max subtraction and an order-invariant normaliser.
/// Throws NumericError on non-finite input.
Var softmax_rows(const Var& x);
/// weights (1×n) · rows (n×d) with an order-invariant reduction over n, so
/// permuting rows together with their weights reproduces the same bits.
Var weighted_rows(const Var& weights, const Var& rows);
Var relu(const Var& x);
/// Tanh-approximated GELU.
Var gelu(const Var& x);
Var square(const Var& x);
Var abs(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
/// Same payload, new rank-2 shape (row-major order preserved).
Var reshape(const Var& x, std::size_t rows, std::size_t cols);
/// out[t] = x[t - k] for t >= k, zero above. Used for causal taps.
Var shift_rows_down(const Var& x, std::size_t k);
Var element(const Var& x, std::size_t r, std::size_t c);
Var select_cols(const Var& x, std::span<const std::size_t> indices);

/// Per-row normalisation over columns, then gamma/beta (both 1×n).
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

}  // namespace ops

inline Var operator+(const Var& a, const Var& b) { return ops::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ops::sub(a, b); }
inline Var operator*(const Var& a, double s) { return ops::scale(a, s); }

}  // namespace snf
