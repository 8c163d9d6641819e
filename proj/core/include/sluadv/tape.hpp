#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sluadv::nn {

/// Row-major dense matrix; every tensor in the models is at most 2-D, with
/// vectors stored as 1 x n and token-level tensors as (batch * max_len) x d.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Thrown when an operation produces NaN or Inf, or on a shape mismatch.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A trainable tensor and its accumulated gradient.
struct Parameter {
  Matrix value;
  // Written only by Tape::backward; mutable so read-only forward passes can
  // bind const models.
  mutable Matrix grad;

  Parameter() = default;
  explicit Parameter(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t index = kNone;
  bool valid() const noexcept { return index != kNone; }
};

/// Reverse-mode recorder. Nodes are appended in evaluation order; backward()
/// walks them in reverse and hands each node's output gradient to the closure
/// recorded with it. Nodes that depend on no trainable leaf carry no closure
/// and are skipped, so frozen sub-networks cost nothing on the way back.
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into inputs.
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Var constant(Matrix value);
  /// Leaf bound to `p`; backward() adds into p.grad when `trainable`.
  Var parameter(const Parameter& p, bool trainable);
  /// Records an op result. `backward` is dropped when no input needs a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(const char* op, Matrix value, const std::vector<Var>& inputs, Backward backward);

  const Matrix& value(Var v) const { return nodes_.at(v.index).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  /// Gradient buffer of `v`, zero-initialized on first use; nullptr when `v`
  /// needs no gradient.
  Matrix* grad_buffer(Var v);

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    if (Matrix* buf = grad_buffer(v)) *buf += g;
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to parameters.
  void backward(Var root);

  double scalar(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
    const Parameter* param = nullptr;
  };

  Var push(const char* op, Matrix value, bool requires_grad, Backward backward);

  std::vector<Node> nodes_;
};

}  // namespace sluadv::nn
