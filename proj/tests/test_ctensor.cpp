#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cgrnn/ctensor.hpp"
#include "support.hpp"

using namespace cgrnn;
using testing::max_abs_diff;
using testing::random_complex;

namespace {

ComplexMatrix scalar(double re, double im) {
  return {Matrix::Constant(1, 1, re), Matrix::Constant(1, 1, im)};
}

// Entry-by-entry product with std::complex, independent of the split kernels.
Eigen::MatrixXcd naive_matmul(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

}  // namespace

TEST_CASE("cmul scalar products") {
  const ComplexMatrix z = scalar(0.3, -1.7);
  CHECK(max_abs_diff(cmul(scalar(1, 0), z), z) == 0.0);
  const ComplexMatrix ii = cmul(scalar(0, 1), scalar(0, 1));
  CHECK(ii(0, 0) == std::complex<double>(-1.0, 0.0));
  const ComplexMatrix p = cmul(scalar(3, 4), scalar(1, -2));
  CHECK(p(0, 0).real() == doctest::Approx(11.0));
  CHECK(p(0, 0).imag() == doctest::Approx(-2.0));
}

TEST_CASE("cmul algebra on random inputs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_complex(4, 3, rng);
    const auto b = random_complex(4, 3, rng);
    const auto c = random_complex(4, 3, rng);
    CHECK(max_abs_diff(cmul(a, b), cmul(b, a)) < 1e-12);
    CHECK(max_abs_diff(cmul(cmul(a, b), c), cmul(a, cmul(b, c))) < 1e-12);
    const Matrix lhs = magnitude(cmul(a, b));
    const Matrix rhs = magnitude(a).cwiseProduct(magnitude(b));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("shape mismatches name both shapes") {
  const ComplexMatrix a(2, 3), b(3, 2);
  CHECK_THROWS_AS(cmul(a, b), ShapeError);
  CHECK_THROWS_AS(cadd(a, b), ShapeError);
  CHECK_THROWS_AS(cmatmul(a, a), ShapeError);
  try {
    cmatmul(a, a);
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(ComplexMatrix(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST_CASE("cmatmul identities") {
  std::mt19937_64 rng(1);
  const auto a = random_complex(3, 3, rng);
  CHECK(max_abs_diff(cmatmul(a, ComplexMatrix::identity(3)), a) < 1e-15);
  const auto x = random_complex(1, 1, rng);
  const auto y = random_complex(1, 1, rng);
  CHECK(max_abs_diff(cmatmul(x, y), cmul(x, y)) < 1e-15);
}

TEST_CASE("cmatmul matches a std::complex triple loop") {
  std::mt19937_64 rng(2);
  const auto a = random_complex(4, 6, rng);
  const auto b = random_complex(6, 3, rng);
  const ComplexMatrix ref = ComplexMatrix::from_eigen(naive_matmul(a.to_eigen(), b.to_eigen()));
  CHECK(max_abs_diff(cmatmul(a, b), ref) < 1e-12);
}

TEST_CASE("block embedding homomorphism") {
  std::mt19937_64 rng(3);
  const auto a = random_complex(5, 5, rng);
  const auto b = random_complex(5, 5, rng);
  const Matrix oracle = block_embed(a) * block_embed(b);
  CHECK((block_embed(cmatmul(a, b)) - oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(max_abs_diff(block_unembed(block_embed(a)), a) == 0.0);
  const Matrix e = block_embed(scalar(1.0, 2.0));
  CHECK(e(0, 1) == -2.0);
  CHECK(e(1, 0) == 2.0);
}

TEST_CASE("hermitian") {
  CHECK(max_abs_diff(hermitian(ComplexMatrix::identity(4)), ComplexMatrix::identity(4)) == 0.0);
  CHECK(hermitian(scalar(0, 1))(0, 0) == std::complex<double>(0, -1));
  std::mt19937_64 rng(4);
  const auto a = random_complex(3, 5, rng);
  CHECK(max_abs_diff(hermitian(hermitian(a)), a) == 0.0);
  CHECK(hermitian(a).rows() == 5);
}

TEST_CASE("polar form") {
  PolarForm p = to_polar(scalar(1, 0));
  CHECK(p.magnitude(0, 0) == 1.0);
  CHECK(p.phase(0, 0) == 0.0);
  p = to_polar(scalar(0, 0));
  CHECK(p.magnitude(0, 0) == 0.0);
  CHECK(p.phase(0, 0) == 0.0);
  p = to_polar(scalar(3, 4));
  CHECK(p.magnitude(0, 0) == doctest::Approx(5.0));
  CHECK(p.phase(0, 0) == doctest::Approx(0.927295218).epsilon(1e-9));
  CHECK(to_polar(scalar(0, 1)).phase(0, 0) == doctest::Approx(std::numbers::pi / 2));

  std::mt19937_64 rng(5);
  const auto z = random_complex(6, 4, rng);
  const PolarForm q = to_polar(z);
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < z.cols(); ++j) {
      CHECK(q.magnitude(i, j) == doctest::Approx(std::abs(z(i, j))));
      CHECK(q.phase(i, j) == doctest::Approx(std::arg(z(i, j))));
    }
  }
  CHECK(max_abs_diff(from_polar(q), z) < 1e-12);
}

TEST_CASE("unitarity error") {
  CHECK(unitarity_error(ComplexMatrix::identity(6)) == 0.0);
  const Index n = 5;
  const ComplexMatrix two_i = cscale(ComplexMatrix::identity(n), 2.0);
  CHECK(unitarity_error(two_i) == doctest::Approx(3.0 * std::sqrt(double(n))));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(n, n);
  for (Index k = 0; k < n; ++k) d(k, k) = std::polar(1.0, phase(rng));
  CHECK(unitarity_error(ComplexMatrix::from_eigen(d)) < 1e-14);
  CHECK_THROWS_AS(unitarity_error(ComplexMatrix(2, 3)), ShapeError);
}

TEST_CASE("unitary matrices preserve vector norms") {
  std::mt19937_64 rng(8);
  const auto g = random_complex(8, 8, rng);
  const Eigen::MatrixXcd q = Eigen::HouseholderQR<Eigen::MatrixXcd>(g.to_eigen()).householderQ();
  const ComplexMatrix w = ComplexMatrix::from_eigen(q);
  const double eps = unitarity_error(w);
  CHECK(eps < 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_complex(8, 1, rng);
    const double ratio = frobenius_norm(cmatmul(w, h)) / frobenius_norm(h);
    CHECK(std::abs(ratio - 1.0) <= 4.0 * eps + 1e-15);
  }
}

TEST_CASE("operations keep finite inputs finite") {
  std::mt19937_64 rng(9);
  const auto a = random_complex(3, 3, rng, 10.0);
  const auto b = random_complex(3, 3, rng, 10.0);
  CHECK(cmatmul(a, b).all_finite());
  CHECK(cmul(a, b).all_finite());
  CHECK(csub(a, b).all_finite());
  CHECK(from_polar(to_polar(ComplexMatrix(3, 3))).all_finite());
}
