#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "metanav/matrix.hpp"
#include "metanav/param_store.hpp"

namespace metanav {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient recorder over dense matrices. Operations append
/// nodes in evaluation order; backward() replays them in reverse with a
/// fixed accumulation order, so gradients are bitwise reproducible.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;

  Var constant(Matrix value);
  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf bound to a parameter key; gradients of every leaf with the same
  /// key are summed by param_grads().
  Var param(const std::string& key, const Matrix& value);
  /// Binds every parameter of a store, keyed by name.
  std::map<std::string, Var> bind(const ParamStore& store);

  void backward(Var loss);
  const Matrix& grad(Var v) const;
  GradMap param_grads() const;

  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Internal node construction used by the op library.
  using BackwardFn =
      std::function<void(Tape&, const Matrix& out_value, const Matrix& grad_out)>;
  Var record(Matrix value, bool requires_grad, BackwardFn fn);
  void accumulate_grad(Var v, const Matrix& g);
  const Matrix& value_of(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> param_leaves_;
};

namespace ad {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1xC row vector to every row of an RxC matrix.
Var add_row(Var m, Var row);
/// Multiplies every row of an RxC matrix elementwise by a 1xC row vector.
Var mul_row(Var m, Var row);

Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
/// Elementwise ln(sigmoid(x)), numerically stable.
Var log_sigmoid(Var x);
/// Elementwise ln(x) for x > 0.
Var log(Var x);
Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
/// Per-row standardisation (x - mean) / sqrt(var + eps), no affine part.
Var layer_norm_rows(Var x, double eps = 1e-5);
/// Per-column (x - mean) / ||x - mean||, i.e. zero mean, unit variance,
/// scaled by 1/sqrt(n). Zero-variance columns are left as zeros.
Var standardize_cols(Var x);

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t start, std::size_t count);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var transpose(Var x);
/// Row-major flatten to 1 x (R*C).
Var flatten(Var x);
/// Column means, 1 x C.
Var mean_rows(Var x);
/// Elementwise mean of equally shaped operands.
Var mean(const std::vector<Var>& parts);

Var sum(Var x);
Var sum_squares(Var x);
/// Single entry as a 1x1 node.
Var pick(Var x, std::size_t r, std::size_t c);

}  // namespace ad
}  // namespace metanav
