#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace eflab::ad {

using Matrix = Eigen::MatrixXd;

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so a reverse sweep visits every node after all of its consumers.
class Tape {
public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(Matrix value, std::string name = "const");
  /// Leaf tied to parameter `slot`; its gradient is reported by parameter_grads().
  Var parameter(Matrix const& value, std::size_t slot, std::string name);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var tanh(Var a);
  Var scale(Var a, double c);
  /// Row r of `table`, as a column vector.
  Var row(Var table, Eigen::Index r);
  /// Vertical concatenation of column vectors.
  Var concat(std::span<Var const> parts);
  Var mean(std::span<Var const> parts);
  Var sum(std::span<Var const> parts);
  /// Node with a caller-supplied backward rule.
  Var custom(std::vector<Var> inputs, Matrix value, Backward backward, std::string name);

  Matrix const& value(Var v) const { return nodes_[v.id].value; }
  Matrix const& grad(Var v) const { return nodes_[v.id].grad; }
  /// Gradient accumulator of an input; allocated on first use.
  Matrix& grad_of(std::size_t id);
  Matrix const& grad_out(std::size_t self) const { return nodes_[self].grad; }
  Var input(std::size_t self, std::size_t k) const { return nodes_[self].inputs[k]; }

  /// Seeds d root = 1 and sweeps backward. Throws NumericError naming the
  /// first node whose gradient is not finite.
  void backward(Var root);

  /// Accumulates parameter-leaf gradients into `grads` (indexed by slot).
  void parameter_grads(std::vector<Matrix>& grads) const;

  std::size_t size() const noexcept { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<Var> inputs;
    Backward backward;
    std::string name;
    long slot = -1;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
};

}  // namespace eflab::ad
