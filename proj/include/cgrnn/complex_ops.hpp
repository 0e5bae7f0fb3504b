#pragma once

#include "cgrnn/autodiff.hpp"
#include "cgrnn/ctensor.hpp"

namespace cgrnn::ad {

/**
 * A complex quantity on a Tape as a pair of real channels. An invalid `im`
 * means the imaginary part is identically zero (real input embedded in C),
 * which lets real data flow through complex layers without zero matmuls.
 */
struct CNode {
  NodeId re;
  NodeId im;
  bool is_real() const { return !im.valid(); }
};

CNode cparameter(Tape& tape, const ComplexMatrix& z);
CNode cconstant(Tape& tape, const ComplexMatrix& z);
/// Real matrix lifted to C with zero imaginary part.
CNode creal(NodeId re);

ComplexMatrix cvalue(const Tape& tape, CNode z);

CNode cadd(Tape& tape, CNode a, CNode b);
CNode csub(Tape& tape, CNode a, CNode b);
/// Elementwise complex product.
CNode cmul(Tape& tape, CNode a, CNode b);
CNode cmatmul(Tape& tape, CNode a, CNode b);
/// Elementwise scaling of a complex node by a real node (gates, magnitudes).
CNode real_scale(Tape& tape, NodeId g, CNode z);
/// |z| elementwise, as a real node.
NodeId modulus(Tape& tape, CNode z);
/// Concatenation [Re(z); Im(z)] used by the C -> R output head.
NodeId stack_channels(Tape& tape, CNode z);

}  // namespace cgrnn::ad
