#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cimage/dense_matrix.hpp"
#include "cimage/param_set.hpp"

namespace cimage::nn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const DenseMatrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;  // requires a 1x1 value
};

// Reverse-mode computation record. Forward ops append nodes; backward()
// seeds a scalar node with 1 and sweeps the record in reverse, accumulating
// exact gradients into parameter leaves.
//
// Every op validates its output for NaN/Inf. Nonsmooth ops (relu, clamp and
// the epsilon guards) fold their active-region pattern into regime_hash();
// two evaluations with different hashes bracket a kink, which is what the
// finite-difference checker uses to skip non-differentiable coordinates.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(DenseMatrix value);
  Var scalar_constant(double v);
  // Differentiable leaf seeded from (and flushed back into) a ParamSet entry.
  Var param(ParamSet& params, const std::string& name);
  // Differentiable leaf not bound to a ParamSet (for input-gradient probes).
  Var input(DenseMatrix value);

  void backward(Var loss);

  const DenseMatrix& value(int id) const { return nodes_[id].value; }
  DenseMatrix& grad(int id) { return nodes_[id].grad; }
  const DenseMatrix& input_grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  std::uint64_t regime_hash() const { return regime_hash_; }
  void fold_regime_bit(bool bit) {
    regime_hash_ = (regime_hash_ ^ (bit ? 0x9e3779b9ULL : 0x85ebca6bULL)) *
                   1099511628211ULL;
  }

  int add_node(DenseMatrix value, std::vector<int> parents, BackwardFn backward,
               const char* op_name);
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    bool requires_grad = false;
    ParamSet* bound_params = nullptr;
    std::string bound_name;
  };
  std::vector<Node> nodes_;
  std::uint64_t regime_hash_ = 1469598103934665603ULL;

  friend struct Var;
};

// --- differentiable ops ------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
// y = x * W + b (b broadcast over rows); the linear layer primitive.
Var linear(Var x, Var w, Var b);
Var relu(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);  // requires strictly positive input
Var pow_const(Var a, double p);
Var clamp(Var a, double lo, double hi);
Var softmax_rows(Var a);
// Rows with norm below eps map to zero rows (zero gradient).
Var l2_normalize_rows(Var a, double eps = 1e-12);
// a / b elementwise; entries with |b| < eps yield 0 with zero gradient.
Var safe_div(Var a, Var b, double eps = 1e-12);
Var slice_cols(Var a, std::size_t c0, std::size_t width);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t r0, std::size_t height);
Var gather_rows(Var a, std::vector<std::uint32_t> indices);
// Column vector (n x 1) broadcast-multiplied across the columns of a (n x m).
Var mul_col(Var a, Var col);
Var safe_div_col(Var a, Var col, double eps = 1e-12);
Var rowwise_sum(Var a);   // n x m -> n x 1
Var sum_all(Var a);       // -> 1 x 1
Var mean_all(Var a);      // -> 1 x 1
// Sparse-dense product y = A x over an adjacency given in CSR form.
// The adjacency is symmetric, so backward applies the same product.
Var spmm(const std::vector<std::size_t>& offsets,
         const std::vector<std::uint32_t>& targets, Var x);
// Mean softmax cross-entropy of row logits against integer class labels.
Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);

}  // namespace cimage::nn
