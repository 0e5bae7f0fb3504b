#include "cgrnn/activations.hpp"

#include <cmath>
#include <stdexcept>

namespace cgrnn {

std::string to_string(GateKind kind) {
  switch (kind) {
    case GateKind::product: return "product";
    case GateKind::tied1: return "tied1";
    case GateKind::tied2: return "tied2";
    case GateKind::free: return "free";
    case GateKind::real_sigmoid: return "real_sigmoid";
  }
  return "unknown";
}

std::string to_string(NonlinKind kind) {
  return kind == NonlinKind::hirose ? "hirose" : "modrelu";
}

GateKind parse_gate_kind(const std::string& s) {
  if (s == "product") return GateKind::product;
  if (s == "tied1") return GateKind::tied1;
  if (s == "tied2") return GateKind::tied2;
  if (s == "free") return GateKind::free;
  if (s == "real_sigmoid") return GateKind::real_sigmoid;
  throw std::invalid_argument("unknown gate kind '" + s + "'");
}

NonlinKind parse_nonlin_kind(const std::string& s) {
  if (s == "hirose") return NonlinKind::hirose;
  if (s == "modrelu") return NonlinKind::modrelu;
  throw std::invalid_argument("unknown nonlinearity '" + s + "'");
}

int gate_coefficient_count(GateKind kind) {
  switch (kind) {
    case GateKind::tied1:
    case GateKind::tied2: return 1;
    case GateKind::free: return 2;
    default: return 0;
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ComplexMatrix hirose(const ComplexMatrix& z, double m) {
  if (!(m > 0.0)) throw std::invalid_argument("hirose: m must be positive");
  const double inv_m2 = 1.0 / (m * m);
  Matrix re(z.rows(), z.cols());
  Matrix im(z.rows(), z.cols());
  for (Index j = 0; j < z.cols(); ++j) {
    for (Index i = 0; i < z.rows(); ++i) {
      const double x = z.re()(i, j);
      const double y = z.im()(i, j);
      const double r = std::hypot(x, y);
      const double s = r == 0.0 ? 0.0 : std::tanh(r * inv_m2) / r;
      re(i, j) = s * x;
      im(i, j) = s * y;
    }
  }
  return {std::move(re), std::move(im)};
}

ComplexMatrix modrelu(const ComplexMatrix& z, const Vector& bias) {
  if (bias.size() != z.rows()) {
    throw ShapeError("modrelu: bias of length " + std::to_string(bias.size()) +
                     " for input " + z.shape());
  }
  Matrix re(z.rows(), z.cols());
  Matrix im(z.rows(), z.cols());
  for (Index j = 0; j < z.cols(); ++j) {
    for (Index i = 0; i < z.rows(); ++i) {
      const double x = z.re()(i, j);
      const double y = z.im()(i, j);
      const double r = std::hypot(x, y);
      const double s = std::max(r + bias(i), 0.0) / (r + kModulusEpsilon);
      re(i, j) = s * x;
      im(i, j) = s * y;
    }
  }
  return {std::move(re), std::move(im)};
}

Matrix mod_sigmoid(const ComplexMatrix& z, double alpha, double beta) {
  return (alpha * z.re() + beta * z.im()).unaryExpr([](double v) { return sigmoid(v); });
}

namespace {

double require_coefficient(const std::optional<double>& c, const char* name, GateKind kind) {
  if (!c) {
    throw std::invalid_argument("gate " + to_string(kind) + " requires coefficient " + name);
  }
  if (*c < 0.0 || *c > 1.0) {
    throw std::invalid_argument("gate coefficient " + std::string(name) + " outside [0,1]");
  }
  return *c;
}

}  // namespace

Matrix gate_forward(const GateFn& fn, const ComplexMatrix& z) {
  auto sig = [](double v) { return sigmoid(v); };
  switch (fn.kind) {
    case GateKind::product:
      return z.re().unaryExpr(sig).cwiseProduct(z.im().unaryExpr(sig));
    case GateKind::tied1: {
      const double a = require_coefficient(fn.alpha, "alpha", fn.kind);
      return a * z.re().unaryExpr(sig) + (1.0 - a) * z.im().unaryExpr(sig);
    }
    case GateKind::tied2: {
      const double a = require_coefficient(fn.alpha, "alpha", fn.kind);
      return mod_sigmoid(z, a, 1.0 - a);
    }
    case GateKind::free:
      return mod_sigmoid(z, require_coefficient(fn.alpha, "alpha", fn.kind),
                         require_coefficient(fn.beta, "beta", fn.kind));
    case GateKind::real_sigmoid:
      return z.re().unaryExpr(sig);
  }
  throw std::invalid_argument("gate_forward: unknown gate kind");
}

namespace ad {

CNode hirose(Tape& tape, CNode z, double m) {
  if (!(m > 0.0)) throw std::invalid_argument("hirose: m must be positive");
  const NodeId r = modulus(tape, z);
  const NodeId t = tape.tanh(tape.scale(r, 1.0 / (m * m)));
  const NodeId s = tape.mul(t, tape.reciprocal(tape.add_scalar(r, kModulusEpsilon)));
  return real_scale(tape, s, z);
}

CNode modrelu(Tape& tape, CNode z, NodeId bias) {
  const NodeId r = modulus(tape, z);
  const NodeId a = tape.relu(tape.add(r, bias));
  const NodeId s = tape.mul(a, tape.reciprocal(tape.add_scalar(r, kModulusEpsilon)));
  return real_scale(tape, s, z);
}

namespace {

NodeId one_minus(Tape& tape, NodeId a) { return tape.add_scalar(tape.scale(a, -1.0), 1.0); }

NodeId imag_or_zero(Tape& tape, CNode z) {
  if (!z.is_real()) return z.im;
  const Matrix& re = tape.value(z.re);
  return tape.constant(Matrix::Zero(re.rows(), re.cols()));
}

void require_node(NodeId id, const char* name, GateKind kind) {
  if (!id.valid()) {
    throw std::invalid_argument("gate " + to_string(kind) + " requires coefficient " + name);
  }
}

}  // namespace

NodeId gate_forward(Tape& tape, GateKind kind, CNode z, NodeId alpha, NodeId beta) {
  switch (kind) {
    case GateKind::product:
      return tape.mul(tape.sigmoid(z.re), tape.sigmoid(imag_or_zero(tape, z)));
    case GateKind::tied1: {
      require_node(alpha, "alpha", kind);
      const NodeId a = tape.mul(alpha, tape.sigmoid(z.re));
      const NodeId b = tape.mul(one_minus(tape, alpha), tape.sigmoid(imag_or_zero(tape, z)));
      return tape.add(a, b);
    }
    case GateKind::tied2: {
      require_node(alpha, "alpha", kind);
      const NodeId mix = tape.add(tape.mul(alpha, z.re),
                                  tape.mul(one_minus(tape, alpha), imag_or_zero(tape, z)));
      return tape.sigmoid(mix);
    }
    case GateKind::free: {
      require_node(alpha, "alpha", kind);
      require_node(beta, "beta", kind);
      const NodeId mix =
          tape.add(tape.mul(alpha, z.re), tape.mul(beta, imag_or_zero(tape, z)));
      return tape.sigmoid(mix);
    }
    case GateKind::real_sigmoid:
      return tape.sigmoid(z.re);
  }
  throw std::invalid_argument("gate_forward: unknown gate kind");
}

}  // namespace ad
}  // namespace cgrnn
