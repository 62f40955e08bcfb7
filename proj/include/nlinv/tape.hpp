#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "nlinv/linalg.hpp"

namespace nlinv {

/// Reverse-mode autodiff over whole matrices. Nodes are appended in
/// evaluation order, so the node list is already topologically sorted and
/// backward() is a single reverse sweep.
class Tape {
 public:
  struct Var {
    std::size_t id;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Valid after backward(); unreachable nodes hold zeros.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Adds a 1 x C row to every row of a.
  Var add_row(Var a, Var row);
  /// max(x, 0); the derivative at exactly 0 is taken as 0.
  Var relu(Var a);
  Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
  Var concat_cols(Var a, Var b);
  /// Sum of squared entries, as a 1 x 1 node.
  Var squared_norm(Var a);
  Var scale(Var a, double factor);
  /// Row vector of skew parameters -> n x n skew matrix.
  Var skew(Var v, std::size_t n);
  Var expm(Var s);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node.
  void backward(Var loss);

 private:
  using Backprop = std::function<void(const Matrix& out_grad, std::vector<Matrix>& grads)>;

  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
  };

  Var push(Matrix value, Backprop backprop);

  std::vector<Node> nodes_;
};

}  // namespace nlinv
