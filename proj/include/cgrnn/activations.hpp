#pragma once

#include <optional>
#include <string>

#include "cgrnn/complex_ops.hpp"
#include "cgrnn/ctensor.hpp"

namespace cgrnn {

/// Offset added to |z| in magnitude-normalizing denominators.
inline constexpr double kModulusEpsilon = 1e-12;

enum class GateKind { product, tied1, tied2, free, real_sigmoid };
enum class NonlinKind { hirose, modrelu };

std::string to_string(GateKind kind);
std::string to_string(NonlinKind kind);
GateKind parse_gate_kind(const std::string& s);
NonlinKind parse_nonlin_kind(const std::string& s);

/**
 * Gate activation C -> (0,1) with its mixing coefficients. tied1/tied2 use
 * alpha only, free uses alpha and beta, product and real_sigmoid use
 * neither. Coefficients are the effective values in [0,1].
 */
struct GateFn {
  GateKind kind = GateKind::free;
  std::optional<double> alpha;
  std::optional<double> beta;

  static GateFn product() { return {GateKind::product, {}, {}}; }
  static GateFn tied1(double alpha) { return {GateKind::tied1, alpha, {}}; }
  static GateFn tied2(double alpha) { return {GateKind::tied2, alpha, {}}; }
  static GateFn free(double alpha, double beta) { return {GateKind::free, alpha, beta}; }
  static GateFn real_sigmoid() { return {GateKind::real_sigmoid, {}, {}}; }
};

/// Number of learnable mixing coefficients the gate kind exposes (0, 1 or 2).
int gate_coefficient_count(GateKind kind);

double sigmoid(double x);

/// tanh(|z|/m^2) z/|z|, 0 at the origin. Throws std::invalid_argument if m <= 0.
ComplexMatrix hirose(const ComplexMatrix& z, double m = 1.0);
/// ReLU(|z| + b) z/(|z| + eps) with one bias per row (unit).
ComplexMatrix modrelu(const ComplexMatrix& z, const Vector& bias);
/// sigma(alpha Re z + beta Im z).
Matrix mod_sigmoid(const ComplexMatrix& z, double alpha, double beta);
/// Evaluates the gate formula of `fn`. Throws std::invalid_argument when a
/// coefficient the kind needs is missing or outside [0,1].
Matrix gate_forward(const GateFn& fn, const ComplexMatrix& z);

namespace ad {

CNode hirose(Tape& tape, CNode z, double m = 1.0);
/// `bias` is a units x 1 node broadcast across the batch.
CNode modrelu(Tape& tape, CNode z, NodeId bias);
/// Gate on the tape; `alpha`/`beta` are 1x1 nodes holding effective
/// coefficients and may be invalid for kinds that do not use them.
NodeId gate_forward(Tape& tape, GateKind kind, CNode z, NodeId alpha, NodeId beta);

}  // namespace ad
}  // namespace cgrnn
