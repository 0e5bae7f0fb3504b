#pragma once

#include <complex>
#include <random>

#include "cgrnn/ctensor.hpp"

namespace testing {

inline cgrnn::Matrix random_real(cgrnn::Index rows, cgrnn::Index cols, std::mt19937_64& rng,
                                 double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  cgrnn::Matrix m(rows, cols);
  for (cgrnn::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

inline cgrnn::ComplexMatrix random_complex(cgrnn::Index rows, cgrnn::Index cols,
                                           std::mt19937_64& rng, double scale = 1.0) {
  cgrnn::Matrix re = random_real(rows, cols, rng, scale);
  cgrnn::Matrix im = random_real(rows, cols, rng, scale);
  return {std::move(re), std::move(im)};
}

inline double max_abs_diff(const cgrnn::ComplexMatrix& a, const cgrnn::ComplexMatrix& b) {
  return std::max((a.re() - b.re()).cwiseAbs().maxCoeff(), (a.im() - b.im()).cwiseAbs().maxCoeff());
}

}  // namespace testing
