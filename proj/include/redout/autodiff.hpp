#pragma once

#include <functional>
#include <vector>

#include "redout/graph.hpp"
#include "redout/matrix.hpp"

namespace redout {

class Tape;

/// Handle to a tape node. Cheap to copy; valid for the tape's lifetime.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  const DenseMatrix& matrix() const;
  const DenseMatrix& grad() const;
  int rows() const { return matrix().rows(); }
  int cols() const { return matrix().cols(); }
  /// The scalar payload of a 1x1 value.
  double scalar() const;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order; backward() replays them in reverse. One tape per forward pass.
class Tape {
public:
  Value leaf(DenseMatrix m, bool requires_grad);
  Value constant(DenseMatrix m) { return leaf(std::move(m), false); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// requires-grad ancestor. `loss` must be 1x1.
  void backward(Value loss);

  void clear();

  // --- primitives ---
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value scale(Value a, double s);
  Value matmul(Value a, Value b);
  /// a * b^T
  Value matmul_nt(Value a, Value b);
  /// Broadcast a 1 x cols bias over every row.
  Value add_rowvec(Value m, Value bias);
  Value relu(Value a);
  Value mean_all(Value a);
  Value mean_rows(Value a);
  Value concat_cols(const std::vector<Value>& parts);
  /// Stack 1 x d row values into a parts.size() x d matrix.
  Value stack_rows(const std::vector<Value>& parts);
  /// out[i] = sum of h's rows over graph.neighbors(i).
  Value neighbor_sum(Value h, const Graph& graph);
  /// out[t] = sum of h's rows listed in groups[t]; empty groups give zeros.
  Value group_sum_rows(Value h, std::vector<std::vector<int>> groups);
  /// Select rows by index.
  Value gather_rows(Value h, std::vector<int> rows);
  /// N x 1 column holding the diagonal of a square matrix.
  Value diagonal(Value m);
  /// L2-normalize each row; all-zero rows stay zero.
  Value normalize_rows(Value a);
  /// Elementwise a*a ... kept minimal: squared Frobenius norm as 1x1.
  Value squared_norm(Value a);

  /// Per-sample InfoNCE terms from cosine-similarity inputs:
  ///   out[i] = -cross[i]/tau + log(sum_{j != i} exp(self[i][j]/tau))
  /// cross is N x 1 (positive-pair sims), self is N x N (within-view sims).
  /// Row-max subtraction keeps the log-sum-exp finite for tiny tau.
  Value info_nce_terms(Value cross, Value self, double tau);

  /// Per-sample conditional-redundancy terms:
  ///   out[i] = s[i][i] - log(mean_{j in pool(i)} exp(s[j][i]))
  /// where s[a][b] = sim(anchor_a, other_b) and pool(i) is the same-label
  /// group excluding i, falling back to the whole batch (excluding i) for
  /// singleton groups, and to {i} itself when the batch has one sample.
  Value cri_terms(Value sims, const std::vector<int>& labels, double log_floor);

  int size() const { return static_cast<int>(nodes_.size()); }

private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  friend struct Value;

  Value push(DenseMatrix value, bool requires_grad, std::function<void()> backward);
  Node& at(int id) { return nodes_[id]; }
  DenseMatrix& grad_of(Value v) { return nodes_[v.id].grad; }
  const DenseMatrix& value_of(Value v) const { return nodes_[v.id].value; }
  bool needs(Value v) const { return nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
};

/// Negative pools for the conditional-redundancy loss; exposed so the
/// non-differentiable reference path agrees with the tape op.
std::vector<std::vector<int>> cri_negative_pools(const std::vector<int>& labels);

}  // namespace redout
