#include "cgrnn/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cgrnn::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Relu: return "relu";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Reciprocal: return "reciprocal";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Atan2: return "atan2";
    case Op::Select: return "select";
    case Op::Sum: return "sum";
    case Op::VStack: return "vstack";
    case Op::SoftmaxXent: return "softmax_cross_entropy";
  }
  return "unknown";
}

const Matrix& Gradients::operator[](NodeId id) const {
  if (!has(id)) {
    throw std::out_of_range("Gradients: no gradient recorded for node " + std::to_string(id.index));
  }
  return grads_[static_cast<std::size_t>(id.index)];
}

bool Gradients::has(NodeId id) const {
  return id.valid() && static_cast<std::size_t>(id.index) < grads_.size() &&
         grads_[static_cast<std::size_t>(id.index)].size() > 0;
}

namespace {

Index broadcast_dim(Index a, Index b, const char* op, const Matrix& ma, const Matrix& mb) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(ma) + " with " +
                   shape_string(mb));
}

// Applies f elementwise under broadcasting without materializing the
// replicated operand in the common scalar and same-shape cases.
template <typename F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, Index rows, Index cols, F f) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return f(a.array(), b.array()).matrix();
  if (b.size() == 1 && a.rows() == rows && a.cols() == cols) return f(a.array(), b(0, 0)).matrix();
  if (a.size() == 1 && b.rows() == rows && b.cols() == cols) return f(a(0, 0), b.array()).matrix();
  return f(a.replicate(rows / a.rows(), cols / a.cols()).array(),
           b.replicate(rows / b.rows(), cols / b.cols()).array())
      .matrix();
}

// Sums a gradient down to the shape of a broadcast operand.
Matrix reduce_to(Matrix g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

constexpr auto kPlus = [](const auto& x, const auto& y) { return x + y; };
constexpr auto kMinus = [](const auto& x, const auto& y) { return x - y; };
constexpr auto kTimes = [](const auto& x, const auto& y) { return x * y; };

void accumulate(Matrix& slot, Matrix contribution) {
  if (slot.size() == 0) {
    slot = std::move(contribution);
  } else {
    slot += contribution;
  }
}

}  // namespace

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tape::Node& Tape::node(NodeId id) const {
  if (!id.valid() || static_cast<std::size_t>(id.index) >= nodes_.size()) {
    throw std::out_of_range("Tape: invalid node id " + std::to_string(id.index));
  }
  return nodes_[static_cast<std::size_t>(id.index)];
}

const Matrix& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("Tape::scalar: node is " + shape_string(v) + ", not 1x1");
  }
  return v(0, 0);
}

Op Tape::op(NodeId id) const { return node(id).op; }
bool Tape::requires_grad(NodeId id) const { return node(id).requires_grad; }

NodeId Tape::parameter(Matrix value) {
  return push(Node{Op::Parameter, true, -1, -1, -1, 0.0, -1, std::move(value)});
}

NodeId Tape::constant(Matrix value) {
  return push(Node{Op::Constant, false, -1, -1, -1, 0.0, -1, std::move(value)});
}

NodeId Tape::unary(Op op, NodeId a, Matrix value, double scalar) {
  return push(Node{op, node(a).requires_grad, a.index, -1, -1, scalar, -1, std::move(value)});
}

NodeId Tape::broadcast_binary(Op op, NodeId a, NodeId b) {
  const Matrix& va = node(a).value;
  const Matrix& vb = node(b).value;
  const char* name = op_name(op).data();
  const Index rows = broadcast_dim(va.rows(), vb.rows(), name, va, vb);
  const Index cols = broadcast_dim(va.cols(), vb.cols(), name, va, vb);
  Matrix out;
  if (op == Op::Add) {
    out = broadcast_apply(va, vb, rows, cols, kPlus);
  } else if (op == Op::Sub) {
    out = broadcast_apply(va, vb, rows, cols, kMinus);
  } else {
    out = broadcast_apply(va, vb, rows, cols, kTimes);
  }
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(Node{op, rg, a.index, b.index, -1, 0.0, -1, std::move(out)});
}

NodeId Tape::add(NodeId a, NodeId b) { return broadcast_binary(Op::Add, a, b); }
NodeId Tape::sub(NodeId a, NodeId b) { return broadcast_binary(Op::Sub, a, b); }
NodeId Tape::mul(NodeId a, NodeId b) { return broadcast_binary(Op::Mul, a, b); }

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& va = node(a).value;
  const Matrix& vb = node(b).value;
  if (va.cols() != vb.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(va) + " vs " +
                     shape_string(vb));
  }
  Matrix out = va * vb;
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(Node{Op::MatMul, rg, a.index, b.index, -1, 0.0, -1, std::move(out)});
}

NodeId Tape::scale(NodeId a, double s) { return unary(Op::Scale, a, value(a) * s, s); }

NodeId Tape::add_scalar(NodeId a, double s) {
  return unary(Op::AddScalar, a, (value(a).array() + s).matrix(), s);
}

NodeId Tape::tanh(NodeId a) { return unary(Op::Tanh, a, value(a).array().tanh().matrix()); }

NodeId Tape::sigmoid(NodeId a) {
  Matrix out = value(a).unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return unary(Op::Sigmoid, a, std::move(out));
}

NodeId Tape::relu(NodeId a) { return unary(Op::Relu, a, value(a).cwiseMax(0.0)); }
NodeId Tape::sqrt(NodeId a) { return unary(Op::Sqrt, a, value(a).cwiseSqrt()); }
NodeId Tape::square(NodeId a) { return unary(Op::Square, a, value(a).array().square().matrix()); }
NodeId Tape::reciprocal(NodeId a) { return unary(Op::Reciprocal, a, value(a).cwiseInverse()); }
NodeId Tape::exp(NodeId a) { return unary(Op::Exp, a, value(a).array().exp().matrix()); }
NodeId Tape::log(NodeId a) { return unary(Op::Log, a, value(a).array().log().matrix()); }

NodeId Tape::atan2(NodeId y, NodeId x) {
  const Matrix& vy = value(y);
  const Matrix& vx = value(x);
  if (vy.rows() != vx.rows() || vy.cols() != vx.cols()) {
    throw ShapeError("atan2: shape mismatch " + shape_string(vy) + " vs " + shape_string(vx));
  }
  Matrix out = vy.binaryExpr(vx, [](double a, double b) { return std::atan2(a, b); });
  const bool rg = node(y).requires_grad || node(x).requires_grad;
  return push(Node{Op::Atan2, rg, y.index, x.index, -1, 0.0, -1, std::move(out)});
}

NodeId Tape::select(NodeId cond, NodeId a, NodeId b) {
  const Matrix& vc = value(cond);
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols() || vc.rows() != va.rows() ||
      vc.cols() != va.cols()) {
    throw ShapeError("select: shape mismatch " + shape_string(vc) + ", " + shape_string(va) +
                     ", " + shape_string(vb));
  }
  Matrix out = (vc.array() > 0.0).select(va, vb);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(Node{Op::Select, rg, a.index, b.index, cond.index, 0.0, -1, std::move(out)});
}

NodeId Tape::sum(NodeId a) { return unary(Op::Sum, a, Matrix::Constant(1, 1, value(a).sum())); }

NodeId Tape::vstack(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != vb.cols()) {
    throw ShapeError("vstack: column counts differ " + shape_string(va) + " vs " +
                     shape_string(vb));
  }
  Matrix out(va.rows() + vb.rows(), va.cols());
  out.topRows(va.rows()) = va;
  out.bottomRows(vb.rows()) = vb;
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(Node{Op::VStack, rg, a.index, b.index, -1, 0.0, -1, std::move(out)});
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
  const Matrix& z = value(logits);
  if (static_cast<Index>(labels.size()) != z.cols()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for logits " + shape_string(z));
  }
  Matrix probs(z.rows(), z.cols());
  double total = 0.0;
  for (Index j = 0; j < z.cols(); ++j) {
    const int label = labels[static_cast<std::size_t>(j)];
    if (label < -1 || label >= z.rows()) {
      throw std::out_of_range("softmax_cross_entropy: class index " + std::to_string(label) +
                              " outside [0, " + std::to_string(z.rows()) + ")");
    }
    const double peak = z.col(j).maxCoeff();
    const auto shifted = (z.col(j).array() - peak).eval();
    const double log_norm = std::log(shifted.exp().sum());
    probs.col(j) = (shifted - log_norm).exp().matrix();
    if (label >= 0) total -= shifted(label) - log_norm;
  }
  const auto aux = static_cast<std::int32_t>(labels_.size());
  labels_.push_back(std::move(labels));
  saved_.push_back(std::move(probs));
  return push(Node{Op::SoftmaxXent, node(logits).requires_grad, logits.index, -1, -1, 0.0, aux,
                   Matrix::Constant(1, 1, total)});
}

Gradients Tape::backward(NodeId loss) const {
  const Node& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ShapeError("backward: loss node is " + shape_string(root.value) + ", not 1x1");
  }
  std::vector<Matrix> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.index)] = Matrix::Ones(1, 1);

  auto emit = [&](std::int32_t target, Matrix contribution) {
    if (target < 0 || !nodes_[static_cast<std::size_t>(target)].requires_grad) return;
    accumulate(grads[static_cast<std::size_t>(target)], std::move(contribution));
  };

  for (std::size_t i = static_cast<std::size_t>(loss.index) + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.op == Op::Parameter || n.op == Op::Constant || !n.requires_grad) continue;
    if (grads[i].size() == 0) continue;
    const Matrix g = std::move(grads[i]);
    grads[i] = Matrix();
    const Matrix* va = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
    const Matrix* vb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;
    const Matrix& y = n.value;

    switch (n.op) {
      case Op::Add:
        emit(n.a, reduce_to(g, va->rows(), va->cols()));
        emit(n.b, reduce_to(g, vb->rows(), vb->cols()));
        break;
      case Op::Sub:
        emit(n.a, reduce_to(g, va->rows(), va->cols()));
        emit(n.b, -reduce_to(g, vb->rows(), vb->cols()));
        break;
      case Op::Mul:
        if (nodes_[static_cast<std::size_t>(n.a)].requires_grad) {
          emit(n.a, reduce_to(broadcast_apply(g, *vb, g.rows(), g.cols(), kTimes), va->rows(),
                                 va->cols()));
        }
        if (nodes_[static_cast<std::size_t>(n.b)].requires_grad) {
          emit(n.b, reduce_to(broadcast_apply(g, *va, g.rows(), g.cols(), kTimes), vb->rows(),
                                 vb->cols()));
        }
        break;
      case Op::MatMul:
        if (nodes_[static_cast<std::size_t>(n.a)].requires_grad) {
          emit(n.a, g * vb->transpose());
        }
        if (nodes_[static_cast<std::size_t>(n.b)].requires_grad) {
          emit(n.b, va->transpose() * g);
        }
        break;
      case Op::Scale:
        emit(n.a, g * n.scalar);
        break;
      case Op::AddScalar:
        emit(n.a, g);
        break;
      case Op::Tanh:
        emit(n.a, (g.array() * (1.0 - y.array().square())).matrix());
        break;
      case Op::Sigmoid:
        emit(n.a, (g.array() * y.array() * (1.0 - y.array())).matrix());
        break;
      case Op::Relu:
        emit(n.a, (va->array() > 0.0).select(g, 0.0));
        break;
      case Op::Sqrt:
        emit(n.a, (y.array() > 0.0).select(0.5 * g.array() / y.array(), 0.0).matrix());
        break;
      case Op::Square:
        emit(n.a, (2.0 * g.array() * va->array()).matrix());
        break;
      case Op::Reciprocal:
        emit(n.a, (-g.array() * y.array().square()).matrix());
        break;
      case Op::Exp:
        emit(n.a, g.cwiseProduct(y));
        break;
      case Op::Log:
        emit(n.a, (g.array() / va->array()).matrix());
        break;
      case Op::Atan2: {
        const auto r2 = (va->array().square() + vb->array().square()).eval();
        const auto safe = (r2 > 0.0).select(r2, 1.0).eval();
        emit(n.a, (r2 > 0.0).select(g.array() * vb->array() / safe, 0.0).matrix());
        emit(n.b, (r2 > 0.0).select(-g.array() * va->array() / safe, 0.0).matrix());
        break;
      }
      case Op::Select: {
        const auto mask = nodes_[static_cast<std::size_t>(n.c)].value.array() > 0.0;
        emit(n.a, mask.select(g, 0.0));
        emit(n.b, mask.select(0.0, g));
        break;
      }
      case Op::Sum:
        emit(n.a, Matrix::Constant(va->rows(), va->cols(), g(0, 0)));
        break;
      case Op::VStack:
        emit(n.a, g.topRows(va->rows()));
        emit(n.b, g.bottomRows(vb->rows()));
        break;
      case Op::SoftmaxXent: {
        const auto& labels = labels_[static_cast<std::size_t>(n.aux)];
        Matrix d = saved_[static_cast<std::size_t>(n.aux)];
        for (Index j = 0; j < d.cols(); ++j) {
          const int label = labels[static_cast<std::size_t>(j)];
          if (label < 0) {
            d.col(j).setZero();
          } else {
            d(label, j) -= 1.0;
          }
        }
        emit(n.a, d * g(0, 0));
        break;
      }
      case Op::Parameter:
      case Op::Constant:
        break;
    }
  }

  // Non-finite values propagate to every parameter they touch, so checking
  // the leaves is enough to catch them.
  Gradients out;
  out.grads_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::Parameter) continue;
    if (grads[i].size() > 0 && !grads[i].allFinite()) {
      throw NumericalError("backward: non-finite gradient reached parameter node " +
                           std::to_string(i));
    }
    out.grads_[i] = grads[i].size() > 0 ? std::move(grads[i])
                                        : Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  }
  return out;
}

std::uint64_t Tape::kink_signature() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](bool bit) {
    h ^= bit ? 0x9eU : 0x35U;
    h *= 1099511628211ULL;
  };
  for (const Node& n : nodes_) {
    if (n.op == Op::Relu) {
      const Matrix& x = nodes_[static_cast<std::size_t>(n.a)].value;
      for (Index k = 0; k < x.size(); ++k) mix(x.data()[k] > 0.0);
    } else if (n.op == Op::Select) {
      const Matrix& c = nodes_[static_cast<std::size_t>(n.c)].value;
      for (Index k = 0; k < c.size(); ++k) mix(c.data()[k] > 0.0);
    }
  }
  return h;
}

}  // namespace cgrnn::ad
