#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cgrnn/autodiff.hpp"

namespace cgrnn {

using Complex = std::complex<double>;

/// The two Wirtinger derivatives of f at a point.
struct WirtingerPair {
  Complex d_z;     ///< 1/2 (df/dx - i df/dy)
  Complex d_zbar;  ///< 1/2 (df/dx + i df/dy)
};

/// Central-difference partials of f = u + iv with respect to x and y.
struct PartialDerivatives {
  Complex d_dx;
  Complex d_dy;
};

PartialDerivatives partials_numeric(const std::function<Complex(Complex)>& f, Complex z, double h);

/**
 * Numerical R- and R-bar-derivatives of f at z from central differences with
 * step h. Throws std::invalid_argument for h <= 0 and NumericalError if f is
 * not finite at the sample points.
 */
WirtingerPair wirtinger_numeric(const std::function<Complex(Complex)>& f, Complex z,
                                double h = 1e-5);

/// Largest violation of the two Cauchy-Riemann equations at z.
double cauchy_riemann_residual(const std::function<Complex(Complex)>& f, Complex z,
                               double h = 1e-5);

namespace ad {

struct NamedBlock {
  std::string name;
  Matrix value;
};

/// Builds a scalar loss from parameter leaves given in the order of the blocks.
using LossBuilder = std::function<NodeId(Tape&, std::span<const NodeId>)>;

struct BlockError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +-h perturbation crossed a relu/select kink.
  std::size_t excluded = 0;
};

struct GradCheckReport {
  std::vector<BlockError> blocks;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t excluded = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
};

/// |a - b| / max(1, |a|, |b|).
double relative_error(double a, double b);

/**
 * Compares reverse-mode gradients with central differences for every entry
 * of every block. Entries whose perturbation changes the tape's kink
 * signature are excluded and counted rather than compared.
 */
GradCheckReport grad_check(const LossBuilder& build, const std::vector<NamedBlock>& params,
                           double tolerance, GradCheckOptions options = {});

}  // namespace ad
}  // namespace cgrnn
