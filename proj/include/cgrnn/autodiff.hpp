#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "cgrnn/ctensor.hpp"

namespace cgrnn::ad {

/// Handle to a node on a Tape. Default-constructed handles are invalid.
struct NodeId {
  std::int32_t index = -1;
  bool valid() const { return index >= 0; }
  friend bool operator==(NodeId, NodeId) = default;
};

enum class Op : std::uint8_t {
  Parameter,
  Constant,
  Add,
  Sub,
  Mul,
  MatMul,
  Scale,
  AddScalar,
  Tanh,
  Sigmoid,
  Relu,
  Sqrt,
  Square,
  Reciprocal,
  Exp,
  Log,
  Atan2,
  Select,
  Sum,
  VStack,
  SoftmaxXent,
};

std::string_view op_name(Op op);

class Tape;

/// Result of Tape::backward: one gradient per parameter leaf, with the
/// shape of that leaf. Parameters the loss does not depend on get zeros.
class Gradients {
 public:
  const Matrix& operator[](NodeId id) const;
  bool has(NodeId id) const;

 private:
  friend class Tape;
  std::vector<Matrix> grads_;
};

/**
 * Define-by-run record of real matrix primitives for reverse-mode
 * differentiation. Every node stores its forward value; nodes are appended in
 * evaluation order so inputs always precede their consumers.
 *
 * Binary elementwise ops (add, sub, mul) broadcast an operand whose row or
 * column count is 1 against the other operand.
 */
class Tape {
 public:
  NodeId parameter(Matrix value);
  NodeId constant(Matrix value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId add_scalar(NodeId a, double s);

  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  /// Subgradient at 0 is 0.
  NodeId relu(NodeId a);
  /// Backward treats the derivative at exactly 0 as 0.
  NodeId sqrt(NodeId a);
  NodeId square(NodeId a);
  NodeId reciprocal(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId atan2(NodeId y, NodeId x);
  /// Elementwise cond > 0 ? a : b. No gradient flows into cond.
  NodeId select(NodeId cond, NodeId a, NodeId b);
  /// Sum of all entries, as a 1x1 node.
  NodeId sum(NodeId a);
  /// Row-wise stacking [a; b].
  NodeId vstack(NodeId a, NodeId b);
  /**
   * Sum over columns of the softmax cross-entropy of logits (classes x batch)
   * against labels (one per column). A label of -1 masks that column out.
   * Throws std::out_of_range for labels outside [-1, classes).
   */
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;
  Op op(NodeId id) const;
  bool requires_grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /**
   * Reverse accumulation from a 1x1 loss node. Throws ShapeError if the loss
   * is not scalar and NumericalError naming the originating node if a
   * non-finite gradient appears.
   */
  Gradients backward(NodeId loss) const;

  /// Hash of the active branch of every relu and select node. Two forward
  /// passes with equal signatures evaluated the same smooth piece.
  std::uint64_t kink_signature() const;

 private:
  struct Node {
    Op op;
    bool requires_grad;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int32_t c = -1;
    double scalar = 0.0;
    std::int32_t aux = -1;
    Matrix value;
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  NodeId unary(Op op, NodeId a, Matrix value, double scalar = 0.0);
  NodeId broadcast_binary(Op op, NodeId a, NodeId b);

  std::vector<Node> nodes_;
  std::vector<std::vector<int>> labels_;
  std::vector<Matrix> saved_;
};

}  // namespace cgrnn::ad
