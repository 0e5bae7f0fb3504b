#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cgrnn/activations.hpp"
#include "cgrnn/wirtinger.hpp"
#include "support.hpp"

using namespace cgrnn;
using testing::random_complex;

namespace {

ComplexMatrix scalar(double re, double im) {
  return {Matrix::Constant(1, 1, re), Matrix::Constant(1, 1, im)};
}

Vector bias1(double b) { return Vector::Constant(1, b); }

double phase_gap(std::complex<double> a, std::complex<double> b) {
  return std::abs(std::remainder(std::arg(a) - std::arg(b), 2 * std::numbers::pi));
}

}  // namespace

TEST_CASE("hirose values") {
  CHECK(hirose(scalar(0, 0))(0, 0) == std::complex<double>(0, 0));
  const auto v = hirose(scalar(10, 0), 1.0)(0, 0);
  CHECK(v.real() == doctest::Approx(std::tanh(10.0)).epsilon(1e-15));
  CHECK(std::abs(v.real() - 0.99999977) < 1e-6);
  CHECK(v.imag() == 0.0);
  // m rescales the radius inside the tanh.
  CHECK(std::abs(hirose(scalar(0, 2), 2.0)(0, 0)) == doctest::Approx(std::tanh(0.5)));
  CHECK_THROWS_AS(hirose(scalar(1, 0), 0.0), std::invalid_argument);
}

TEST_CASE("modrelu values") {
  const auto v = modrelu(scalar(1, 0), bias1(-0.5))(0, 0);
  CHECK(v.real() == doctest::Approx(0.5));
  CHECK(v.imag() == 0.0);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> radius(0.0, 0.5), angle(-3.14, 3.14);
  for (int k = 0; k < 100; ++k) {
    const auto z = std::polar(radius(rng), angle(rng));
    CHECK(std::abs(modrelu(scalar(z.real(), z.imag()), bias1(-0.5))(0, 0)) == 0.0);
  }
  const auto z = random_complex(5, 3, rng);
  CHECK(testing::max_abs_diff(modrelu(z, Vector::Zero(5)), z) < 1e-10);
  CHECK(modrelu(ComplexMatrix(2, 2), Vector::Constant(2, 0.3)).all_finite());
  CHECK_THROWS_AS(modrelu(z, Vector::Zero(4)), ShapeError);
}

TEST_CASE("phase preservation") {
  std::mt19937_64 rng(22);
  const auto z = random_complex(10, 100, rng, 2.0);
  const auto h = hirose(z);
  const auto m = modrelu(z, Vector::Constant(10, -0.5));
  for (Index j = 0; j < z.cols(); ++j) {
    for (Index i = 0; i < z.rows(); ++i) {
      CHECK(phase_gap(h(i, j), z(i, j)) < 1e-12);
      if (std::abs(z(i, j)) > 0.5 + 1e-9) CHECK(phase_gap(m(i, j), z(i, j)) < 1e-9);
    }
  }
}

TEST_CASE("boundedness and monotone magnitude") {
  std::mt19937_64 rng(23);
  const auto z = random_complex(20, 20, rng, 50.0);
  CHECK(magnitude(hirose(z)).maxCoeff() < 1.0 + 1e-15);
  for (double r : {10.0, 1e3, 1e6}) {
    CHECK(std::abs(modrelu(scalar(r, 0), bias1(-0.5))(0, 0)) > r / 2);
  }
  const double theta = 0.7;
  double last_h = 0.0, last_m = 0.0;
  for (double r = 0.0; r < 6.0; r += 0.05) {
    const auto p = std::polar(r, theta);
    const double mh = std::abs(hirose(scalar(p.real(), p.imag()))(0, 0));
    const double mm = std::abs(modrelu(scalar(p.real(), p.imag()), bias1(-0.5))(0, 0));
    CHECK(mh >= last_h);
    CHECK(mm >= last_m);
    last_h = mh;
    last_m = mm;
  }
}

TEST_CASE("mod_sigmoid") {
  CHECK(mod_sigmoid(scalar(0, 0), 0.4, 0.9)(0, 0) == 0.5);
  CHECK(mod_sigmoid(scalar(1.3, 7.0), 1.0, 0.0)(0, 0) == doctest::Approx(sigmoid(1.3)));
  CHECK(mod_sigmoid(scalar(1.3, -7.0), 1.0, 0.0)(0, 0) == doctest::Approx(sigmoid(1.3)));
  CHECK(mod_sigmoid(scalar(2, 2), 0.5, 0.5)(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("gate formulas") {
  CHECK(gate_forward(GateFn::product(), scalar(0, 0))(0, 0) == doctest::Approx(0.25));
  const auto z = scalar(0.8, -1.1);
  CHECK(gate_forward(GateFn::tied1(1.0), z)(0, 0) == doctest::Approx(sigmoid(0.8)));
  CHECK(gate_forward(GateFn::tied2(0.3), scalar(1, 2))(0, 0) == doctest::Approx(0.8455).epsilon(1e-4));
  CHECK(gate_forward(GateFn::free(0.2, 0.9), z)(0, 0) == doctest::Approx(sigmoid(0.2 * 0.8 - 0.9 * 1.1)));
  CHECK(gate_forward(GateFn::real_sigmoid(), z)(0, 0) == doctest::Approx(sigmoid(0.8)));
  CHECK(gate_coefficient_count(GateKind::product) == 0);
  CHECK(gate_coefficient_count(GateKind::tied1) == 1);
  CHECK(gate_coefficient_count(GateKind::tied2) == 1);
  CHECK(gate_coefficient_count(GateKind::free) == 2);
  CHECK_THROWS_AS(gate_forward(GateFn::tied1(1.5), z), std::invalid_argument);
  CHECK_THROWS_AS(gate_forward(GateFn{GateKind::free, 0.5, {}}, z), std::invalid_argument);

  std::mt19937_64 rng(24);
  const auto wide = random_complex(8, 8, rng, 5.0);
  for (const GateFn& fn : {GateFn::product(), GateFn::tied1(0.3), GateFn::tied2(0.6),
                           GateFn::free(0.1, 0.7), GateFn::real_sigmoid()}) {
    const Matrix g = gate_forward(fn, wide);
    CHECK(g.minCoeff() > 0.0);
    CHECK(g.maxCoeff() < 1.0);
  }
}

TEST_CASE("tape activations agree with value versions and differentiate cleanly") {
  std::mt19937_64 rng(25);
  const ComplexMatrix z = random_complex(3, 4, rng);
  const Vector b = (Vector(3) << -0.2, 0.1, -0.6).finished();
  const Matrix weight = testing::random_real(3, 4, rng);
  for (int which = 0; which < 3; ++which) {
    ad::Tape probe;
    const ad::CNode zn = ad::cconstant(probe, z);
    ComplexMatrix expected;
    ad::CNode out;
    if (which == 0) {
      out = ad::hirose(probe, zn, 1.0);
      expected = hirose(z, 1.0);
    } else if (which == 1) {
      out = ad::hirose(probe, zn, 1.7);
      expected = hirose(z, 1.7);
    } else {
      out = ad::modrelu(probe, zn, probe.constant(b));
      expected = modrelu(z, b);
    }
    // The tape divides by |z| + eps, the value version by |z|.
    CHECK(testing::max_abs_diff(ad::cvalue(probe, out), expected) < 1e-11);

    const std::vector<ad::NamedBlock> blocks{{"re", z.re()}, {"im", z.im()}, {"b", b}};
    const auto report = ad::grad_check(
        [&](ad::Tape& t, std::span<const ad::NodeId> p) {
          const ad::CNode zz{p[0], p[1]};
          const ad::CNode y = which == 0   ? ad::hirose(t, zz, 1.0)
                              : which == 1 ? ad::hirose(t, zz, 1.7)
                                           : ad::modrelu(t, zz, p[2]);
          return t.add(t.sum(t.mul(y.re, t.constant(weight))), t.sum(t.square(y.im)));
        },
        blocks, 1e-6);
    CHECK(report.passed);
  }
  const std::vector<ad::NamedBlock> gblocks{{"re", z.re()}, {"im", z.im()}, {"a", Matrix::Constant(1, 1, 0.3)},
                                            {"b", Matrix::Constant(1, 1, 0.8)}};
  for (GateKind kind : {GateKind::product, GateKind::tied1, GateKind::tied2, GateKind::free}) {
    const auto report = ad::grad_check(
        [&](ad::Tape& t, std::span<const ad::NodeId> p) {
          return t.sum(t.mul(ad::gate_forward(t, kind, {p[0], p[1]}, p[2], p[3]), t.constant(weight)));
        },
        gblocks, 1e-6);
    CHECK(report.passed);
  }
}
