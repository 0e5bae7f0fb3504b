#include "cgrnn/ctensor.hpp"

#include <cmath>

namespace cgrnn {

std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

std::string shape_string(const Matrix& m) { return shape_string(m.rows(), m.cols()); }

namespace {

void require_same_shape(const ComplexMatrix& a, const ComplexMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

}  // namespace

ComplexMatrix::ComplexMatrix(Index rows, Index cols)
    : re_(Matrix::Zero(rows, cols)), im_(Matrix::Zero(rows, cols)) {}

ComplexMatrix::ComplexMatrix(Matrix re, Matrix im) : re_(std::move(re)), im_(std::move(im)) {
  if (re_.rows() != im_.rows() || re_.cols() != im_.cols()) {
    throw ShapeError("ComplexMatrix: channel shapes differ " + shape_string(re_) + " vs " +
                     shape_string(im_));
  }
}

ComplexMatrix ComplexMatrix::identity(Index n) {
  return {Matrix::Identity(n, n), Matrix::Zero(n, n)};
}

ComplexMatrix ComplexMatrix::from_real(Matrix re) {
  Matrix im = Matrix::Zero(re.rows(), re.cols());
  return {std::move(re), std::move(im)};
}

ComplexMatrix ComplexMatrix::from_eigen(const Eigen::MatrixXcd& z) { return {z.real(), z.imag()}; }

Eigen::MatrixXcd ComplexMatrix::to_eigen() const {
  Eigen::MatrixXcd z(rows(), cols());
  z.real() = re_;
  z.imag() = im_;
  return z;
}

ComplexMatrix cadd(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "cadd");
  return {a.re() + b.re(), a.im() + b.im()};
}

ComplexMatrix csub(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "csub");
  return {a.re() - b.re(), a.im() - b.im()};
}

ComplexMatrix cmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  require_same_shape(a, b, "cmul");
  Matrix re = a.re().cwiseProduct(b.re()) - a.im().cwiseProduct(b.im());
  Matrix im = a.re().cwiseProduct(b.im()) + a.im().cwiseProduct(b.re());
  return {std::move(re), std::move(im)};
}

ComplexMatrix cscale(const ComplexMatrix& a, double s) { return {a.re() * s, a.im() * s}; }

ComplexMatrix cmatmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("cmatmul: inner dimensions differ " + a.shape() + " vs " + b.shape());
  }
  Matrix re = a.re() * b.re();
  re.noalias() -= a.im() * b.im();
  Matrix im = a.re() * b.im();
  im.noalias() += a.im() * b.re();
  return {std::move(re), std::move(im)};
}

ComplexMatrix hermitian(const ComplexMatrix& a) { return {a.re().transpose(), -a.im().transpose()}; }

PolarForm to_polar(const ComplexMatrix& z) {
  PolarForm p{Matrix(z.rows(), z.cols()), Matrix(z.rows(), z.cols())};
  for (Index j = 0; j < z.cols(); ++j) {
    for (Index i = 0; i < z.rows(); ++i) {
      const double x = z.re()(i, j);
      const double y = z.im()(i, j);
      const double r = std::hypot(x, y);
      p.magnitude(i, j) = r;
      // atan2(-0, x<0) would give -pi; fold it onto the half-open range.
      double phase = r == 0.0 ? 0.0 : std::atan2(y, x);
      if (phase == -M_PI) phase = M_PI;
      p.phase(i, j) = phase;
    }
  }
  return p;
}

ComplexMatrix from_polar(const PolarForm& p) {
  if (p.magnitude.rows() != p.phase.rows() || p.magnitude.cols() != p.phase.cols()) {
    throw ShapeError("from_polar: shape mismatch " + shape_string(p.magnitude) + " vs " +
                     shape_string(p.phase));
  }
  Matrix re = p.magnitude.cwiseProduct(p.phase.array().cos().matrix());
  Matrix im = p.magnitude.cwiseProduct(p.phase.array().sin().matrix());
  return {std::move(re), std::move(im)};
}

Matrix magnitude(const ComplexMatrix& z) {
  return (z.re().array().square() + z.im().array().square()).sqrt().matrix();
}

double frobenius_norm(const ComplexMatrix& a) {
  return std::sqrt(a.re().squaredNorm() + a.im().squaredNorm());
}

double unitarity_error(const ComplexMatrix& w) {
  if (w.rows() != w.cols()) {
    throw ShapeError("unitarity_error: matrix is not square " + w.shape());
  }
  ComplexMatrix gram = cmatmul(hermitian(w), w);
  Matrix re = gram.re() - Matrix::Identity(w.rows(), w.cols());
  return std::sqrt(re.squaredNorm() + gram.im().squaredNorm());
}

Matrix block_embed(const ComplexMatrix& z) {
  const Index r = z.rows();
  const Index c = z.cols();
  Matrix m(2 * r, 2 * c);
  m.topLeftCorner(r, c) = z.re();
  m.topRightCorner(r, c) = -z.im();
  m.bottomLeftCorner(r, c) = z.im();
  m.bottomRightCorner(r, c) = z.re();
  return m;
}

ComplexMatrix block_unembed(const Matrix& m) {
  if (m.rows() % 2 != 0 || m.cols() % 2 != 0) {
    throw ShapeError("block_unembed: odd dimensions " + shape_string(m));
  }
  const Index r = m.rows() / 2;
  const Index c = m.cols() / 2;
  return {m.topLeftCorner(r, c), m.bottomLeftCorner(r, c)};
}

}  // namespace cgrnn
