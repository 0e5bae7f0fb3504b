#include "cgrnn/complex_ops.hpp"

namespace cgrnn::ad {

CNode cparameter(Tape& tape, const ComplexMatrix& z) {
  return {tape.parameter(z.re()), tape.parameter(z.im())};
}

CNode cconstant(Tape& tape, const ComplexMatrix& z) {
  return {tape.constant(z.re()), tape.constant(z.im())};
}

CNode creal(NodeId re) { return {re, NodeId{}}; }

ComplexMatrix cvalue(const Tape& tape, CNode z) {
  const Matrix& re = tape.value(z.re);
  if (z.is_real()) return ComplexMatrix::from_real(re);
  return {re, tape.value(z.im)};
}

CNode cadd(Tape& tape, CNode a, CNode b) {
  const NodeId re = tape.add(a.re, b.re);
  if (a.is_real() && b.is_real()) return creal(re);
  if (a.is_real()) return {re, b.im};
  if (b.is_real()) return {re, a.im};
  return {re, tape.add(a.im, b.im)};
}

CNode csub(Tape& tape, CNode a, CNode b) {
  const NodeId re = tape.sub(a.re, b.re);
  if (a.is_real() && b.is_real()) return creal(re);
  if (b.is_real()) return {re, a.im};
  if (a.is_real()) return {re, tape.scale(b.im, -1.0)};
  return {re, tape.sub(a.im, b.im)};
}

CNode cmul(Tape& tape, CNode a, CNode b) {
  if (a.is_real() && b.is_real()) return creal(tape.mul(a.re, b.re));
  if (b.is_real()) return {tape.mul(a.re, b.re), tape.mul(a.im, b.re)};
  if (a.is_real()) return {tape.mul(a.re, b.re), tape.mul(a.re, b.im)};
  const NodeId re = tape.sub(tape.mul(a.re, b.re), tape.mul(a.im, b.im));
  const NodeId im = tape.add(tape.mul(a.re, b.im), tape.mul(a.im, b.re));
  return {re, im};
}

CNode cmatmul(Tape& tape, CNode a, CNode b) {
  if (a.is_real() && b.is_real()) return creal(tape.matmul(a.re, b.re));
  if (b.is_real()) return {tape.matmul(a.re, b.re), tape.matmul(a.im, b.re)};
  if (a.is_real()) return {tape.matmul(a.re, b.re), tape.matmul(a.re, b.im)};
  const NodeId re = tape.sub(tape.matmul(a.re, b.re), tape.matmul(a.im, b.im));
  const NodeId im = tape.add(tape.matmul(a.re, b.im), tape.matmul(a.im, b.re));
  return {re, im};
}

CNode real_scale(Tape& tape, NodeId g, CNode z) {
  if (z.is_real()) return creal(tape.mul(g, z.re));
  return {tape.mul(g, z.re), tape.mul(g, z.im)};
}

NodeId modulus(Tape& tape, CNode z) {
  if (z.is_real()) return tape.sqrt(tape.square(z.re));
  return tape.sqrt(tape.add(tape.square(z.re), tape.square(z.im)));
}

NodeId stack_channels(Tape& tape, CNode z) {
  if (z.is_real()) {
    const Matrix& re = tape.value(z.re);
    return tape.vstack(z.re, tape.constant(Matrix::Zero(re.rows(), re.cols())));
  }
  return tape.vstack(z.re, z.im);
}

}  // namespace cgrnn::ad
