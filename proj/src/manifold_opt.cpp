#include "cgrnn/manifold_opt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cgrnn {

namespace {

using CMat = Eigen::MatrixXcd;
using Cplx = std::complex<double>;

CMat random_phase_diagonal(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(-M_PI, M_PI);
  CMat d = CMat::Zero(n, n);
  for (Index i = 0; i < n; ++i) d(i, i) = std::polar(1.0, phase(rng));
  return d;
}

CMat random_reflection(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXcd v(n);
  for (Index i = 0; i < n; ++i) v(i) = Cplx(normal(rng), normal(rng));
  v /= v.norm();
  return CMat::Identity(n, n) - 2.0 * v * v.adjoint();
}

CMat random_permutation(Index n, std::mt19937_64& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  CMat p = CMat::Zero(n, n);
  for (Index i = 0; i < n; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

}  // namespace

ComplexMatrix unitary_dft(Index n, bool inverse) {
  const double sign = inverse ? 1.0 : -1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  CMat f(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < n; ++k) {
      // Reduce jk mod n before scaling so large n keeps full phase accuracy.
      const double angle = sign * 2.0 * M_PI * static_cast<double>((j * k) % n) /
                           static_cast<double>(n);
      f(j, k) = std::polar(scale, angle);
    }
  }
  return ComplexMatrix::from_eigen(f);
}

ComplexMatrix unitary_init(Index n, UnitaryInit scheme, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("unitary_init: n must be at least 1");
  if (scheme == UnitaryInit::component_product) {
    const CMat f = unitary_dft(n).to_eigen();
    const CMat f_inv = unitary_dft(n, true).to_eigen();
    const CMat d1 = random_phase_diagonal(n, rng);
    const CMat r1 = random_reflection(n, rng);
    const CMat perm = random_permutation(n, rng);
    const CMat d2 = random_phase_diagonal(n, rng);
    const CMat r2 = random_reflection(n, rng);
    const CMat d3 = random_phase_diagonal(n, rng);
    const CMat w = d3 * r2 * f_inv * d2 * perm * r1 * f * d1;
    return ComplexMatrix::from_eigen(w);
  }
  std::normal_distribution<double> normal;
  CMat z(n, n);
  for (Index i = 0; i < z.size(); ++i) {
    z.data()[i] = Cplx(normal(rng), normal(rng)) / std::sqrt(2.0);
  }
  Eigen::HouseholderQR<CMat> qr(z);
  CMat q = qr.householderQ() * CMat::Identity(n, n);
  const CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  return ComplexMatrix::from_eigen(q);
}

Matrix orthogonal_init(Index n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("orthogonal_init: n must be at least 1");
  std::normal_distribution<double> normal;
  Matrix z(n, n);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(z);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix& packed = qr.matrixQR();
  for (Index j = 0; j < n; ++j) {
    if (packed(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

double glorot_limit(Index n_in, Index n_out) {
  return std::sqrt(6.0 / static_cast<double>(n_in + n_out));
}

Matrix glorot_uniform(Index n_in, Index n_out, std::mt19937_64& rng) {
  if (n_in < 1 || n_out < 1) throw std::invalid_argument("glorot_uniform: dims must be >= 1");
  const double l = glorot_limit(n_in, n_out);
  std::uniform_real_distribution<double> dist(-l, l);
  Matrix m(n_out, n_in);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

ComplexMatrix stiefel_generator(const ComplexMatrix& w, const ComplexMatrix& grad) {
  if (w.rows() != grad.rows() || w.cols() != grad.cols()) {
    throw ShapeError("stiefel_generator: shape mismatch " + w.shape() + " vs " + grad.shape());
  }
  const ComplexMatrix gw = cmatmul(grad, hermitian(w));
  // W G^H is the conjugate transpose of G W^H.
  return csub(gw, hermitian(gw));
}

ComplexMatrix stiefel_update(const ComplexMatrix& w, const ComplexMatrix& grad, double lr) {
  if (w.rows() != w.cols()) throw ShapeError("stiefel_update: W is not square " + w.shape());
  const Index n = w.rows();
  const ComplexMatrix a = stiefel_generator(w, grad);
  const double h = 0.5 * lr;
  const bool real = w.im().isZero(0.0) && grad.im().isZero(0.0);
  if (real) {
    const Matrix lhs = Matrix::Identity(n, n) + h * a.re();
    const Matrix rhs = w.re() - h * (a.re() * w.re());
    Matrix x = lhs.partialPivLu().solve(rhs);
    if (!x.allFinite()) throw NumericalError("stiefel_update: solve produced non-finite values");
    return ComplexMatrix::from_real(std::move(x));
  }
  const ComplexMatrix lhs(Matrix::Identity(n, n) + h * a.re(), h * a.im());
  const ComplexMatrix rhs = csub(w, cscale(cmatmul(a, w), h));
  // Solve on the block embedding; the right-hand side only needs its left
  // block column [Re; Im].
  Matrix rhs_cols(2 * n, n);
  rhs_cols.topRows(n) = rhs.re();
  rhs_cols.bottomRows(n) = rhs.im();
  const Matrix x = block_embed(lhs).partialPivLu().solve(rhs_cols);
  if (!x.allFinite()) throw NumericalError("stiefel_update: solve produced non-finite values");
  return {x.topRows(n), x.bottomRows(n)};
}

void rmsprop_update(Matrix& param, const Matrix& grad, RmsState& state, const RmsPropConfig& config) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError("rmsprop_update: shape mismatch " + shape_string(param) + " vs " +
                     shape_string(grad));
  }
  if (state.mean_square.size() == 0) state.mean_square = Matrix::Zero(grad.rows(), grad.cols());
  state.mean_square =
      config.decay * state.mean_square + (1.0 - config.decay) * grad.cwiseProduct(grad);
  param.array() -= config.lr * grad.array() / (state.mean_square.array().sqrt() + config.epsilon);
}

double global_norm(const std::vector<Matrix>& blocks) {
  double total = 0.0;
  for (const auto& b : blocks) total += b.squaredNorm();
  return std::sqrt(total);
}

double clip_global_norm(std::vector<Matrix>& blocks, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(blocks);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& b : blocks) b *= s;
  }
  return norm;
}

HybridOptimizer::HybridOptimizer(const ParameterSet& params, OptimizerConfig config)
    : config_(config), re_state_(params.size()), im_state_(params.size()) {}

double HybridOptimizer::step(ParameterSet& params, const std::vector<ComplexMatrix>& grads) {
  auto& items = params.items();
  if (grads.size() != items.size()) {
    throw ShapeError("HybridOptimizer: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(items.size()) + " parameters");
  }

  // Gather the blocks that take part in clipping, real channel then imaginary.
  std::vector<Matrix> clipped;
  std::vector<std::size_t> owner;
  double all_sq = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const bool constrained = items[i].constraint == Constraint::stiefel;
    all_sq += grads[i].re().squaredNorm() + (items[i].is_complex ? grads[i].im().squaredNorm() : 0.0);
    if (constrained && !config_.clip_stiefel) continue;
    clipped.push_back(grads[i].re());
    owner.push_back(i);
    if (items[i].is_complex) {
      clipped.push_back(grads[i].im());
      owner.push_back(i);
    }
  }
  clip_global_norm(clipped, config_.clip);

  for (std::size_t k = 0; k < clipped.size();) {
    const std::size_t i = owner[k];
    Parameter& p = items[i];
    if (p.constraint == Constraint::stiefel) {
      const ComplexMatrix g = p.is_complex ? ComplexMatrix(clipped[k], clipped[k + 1])
                                           : ComplexMatrix::from_real(clipped[k]);
      p.value = stiefel_update(p.value, g, config_.stiefel_lr);
    } else {
      Matrix re = p.value.re();
      rmsprop_update(re, clipped[k], re_state_[i], config_.rms);
      Matrix im = p.value.im();
      if (p.is_complex) rmsprop_update(im, clipped[k + 1], im_state_[i], config_.rms);
      p.value = ComplexMatrix(std::move(re), std::move(im));
    }
    k += p.is_complex ? 2 : 1;
  }
  if (!config_.clip_stiefel) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      Parameter& p = items[i];
      if (p.constraint != Constraint::stiefel) continue;
      const ComplexMatrix g = p.is_complex ? grads[i] : ComplexMatrix::from_real(grads[i].re());
      p.value = stiefel_update(p.value, g, config_.stiefel_lr);
    }
  }
  return std::sqrt(all_sq);
}

}  // namespace cgrnn
