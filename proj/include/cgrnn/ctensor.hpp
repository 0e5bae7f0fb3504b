#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cgrnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when operand shapes are incompatible. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces or meets a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(Index rows, Index cols);
std::string shape_string(const Matrix& m);

/**
 * Dense complex matrix in split storage: one real matrix for the real part
 * and one for the imaginary part, both row-count x col-count. A vector is a
 * one-column matrix; a batch of vectors is stored column-per-sample.
 *
 * Values are immutable once constructed.
 */
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  /// Zero matrix.
  ComplexMatrix(Index rows, Index cols);
  /// Adopts the two channels; throws ShapeError if they differ in shape.
  ComplexMatrix(Matrix re, Matrix im);

  static ComplexMatrix identity(Index n);
  static ComplexMatrix from_real(Matrix re);
  static ComplexMatrix from_eigen(const Eigen::MatrixXcd& z);

  const Matrix& re() const { return re_; }
  const Matrix& im() const { return im_; }
  Index rows() const { return re_.rows(); }
  Index cols() const { return re_.cols(); }
  std::complex<double> operator()(Index r, Index c) const { return {re_(r, c), im_(r, c)}; }

  Eigen::MatrixXcd to_eigen() const;
  std::string shape() const { return shape_string(re_); }
  bool all_finite() const { return re_.allFinite() && im_.allFinite(); }

 private:
  Matrix re_;
  Matrix im_;
};

/// Magnitude/phase decomposition; phase lies in (-pi, pi] and is 0 where the magnitude is 0.
struct PolarForm {
  Matrix magnitude;
  Matrix phase;
};

ComplexMatrix cadd(const ComplexMatrix& a, const ComplexMatrix& b);
ComplexMatrix csub(const ComplexMatrix& a, const ComplexMatrix& b);
/// Elementwise complex product.
ComplexMatrix cmul(const ComplexMatrix& a, const ComplexMatrix& b);
/// Multiplies every entry by a real scalar.
ComplexMatrix cscale(const ComplexMatrix& a, double s);
/// Matrix product built from four real products.
ComplexMatrix cmatmul(const ComplexMatrix& a, const ComplexMatrix& b);
/// Conjugate transpose.
ComplexMatrix hermitian(const ComplexMatrix& a);

PolarForm to_polar(const ComplexMatrix& z);
ComplexMatrix from_polar(const PolarForm& p);

/// Elementwise modulus.
Matrix magnitude(const ComplexMatrix& z);
double frobenius_norm(const ComplexMatrix& a);

/// ||W^H W - I||_F. Throws ShapeError for non-square input.
double unitarity_error(const ComplexMatrix& w);

/// Real representation [[re, -im], [im, re]] of size 2r x 2c.
Matrix block_embed(const ComplexMatrix& z);
/// Inverse of block_embed; reads the left block column.
ComplexMatrix block_unembed(const Matrix& m);

}  // namespace cgrnn
