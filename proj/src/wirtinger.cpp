#include "cgrnn/wirtinger.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cgrnn {

namespace {

Complex checked_eval(const std::function<Complex(Complex)>& f, Complex z) {
  const Complex v = f(z);
  if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
    throw NumericalError("wirtinger: f is not finite near the evaluation point");
  }
  return v;
}

}  // namespace

PartialDerivatives partials_numeric(const std::function<Complex(Complex)>& f, Complex z, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("wirtinger: step h must be positive");
  const Complex dx = (checked_eval(f, z + Complex(h, 0.0)) - checked_eval(f, z - Complex(h, 0.0))) /
                     (2.0 * h);
  const Complex dy = (checked_eval(f, z + Complex(0.0, h)) - checked_eval(f, z - Complex(0.0, h))) /
                     (2.0 * h);
  return {dx, dy};
}

WirtingerPair wirtinger_numeric(const std::function<Complex(Complex)>& f, Complex z, double h) {
  const auto [dx, dy] = partials_numeric(f, z, h);
  const Complex i(0.0, 1.0);
  return {0.5 * (dx - i * dy), 0.5 * (dx + i * dy)};
}

double cauchy_riemann_residual(const std::function<Complex(Complex)>& f, Complex z, double h) {
  const auto [dx, dy] = partials_numeric(f, z, h);
  // du/dx = dv/dy and dv/dx = -du/dy
  return std::max(std::abs(dx.real() - dy.imag()), std::abs(dx.imag() + dy.real()));
}

namespace ad {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

namespace {

struct Evaluation {
  double loss;
  std::uint64_t signature;
};

Evaluation evaluate(const LossBuilder& build, const std::vector<NamedBlock>& params) {
  Tape tape;
  std::vector<NodeId> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.parameter(p.value));
  const NodeId loss = build(tape, leaves);
  return {tape.scalar(loss), tape.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, const std::vector<NamedBlock>& params,
                           double tolerance, GradCheckOptions options) {
  Tape tape;
  std::vector<NodeId> leaves;
  for (const auto& p : params) leaves.push_back(tape.parameter(p.value));
  const NodeId loss = build(tape, leaves);
  const Gradients grads = tape.backward(loss);
  const std::uint64_t base_signature = tape.kink_signature();

  GradCheckReport report;
  report.tolerance = tolerance;
  std::vector<NamedBlock> probe = params;
  for (std::size_t b = 0; b < params.size(); ++b) {
    BlockError block{params[b].name};
    const Matrix& analytic = grads[leaves[b]];
    Matrix& slot = probe[b].value;
    for (Index k = 0; k < slot.size(); ++k) {
      const double original = slot.data()[k];
      slot.data()[k] = original + options.step;
      const Evaluation plus = evaluate(build, probe);
      slot.data()[k] = original - options.step;
      const Evaluation minus = evaluate(build, probe);
      slot.data()[k] = original;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++block.excluded;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * options.step);
      block.max_rel_error = std::max(block.max_rel_error, relative_error(analytic.data()[k], numeric));
      ++block.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.excluded += block.excluded;
    report.blocks.push_back(std::move(block));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace ad
}  // namespace cgrnn
