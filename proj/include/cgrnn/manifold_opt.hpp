#pragma once

#include <random>
#include <vector>

#include "cgrnn/cells.hpp"
#include "cgrnn/ctensor.hpp"
#include "cgrnn/params.hpp"

namespace cgrnn {

/// Unitary DFT matrix F_jk = exp(-2 pi i jk / n) / sqrt(n), or its inverse.
ComplexMatrix unitary_dft(Index n, bool inverse = false);

/**
 * Random unitary n x n matrix. component_product materializes
 * D3 R2 F^-1 D2 P R1 F D1 (diagonal phases, Householder reflections, a
 * permutation and unitary DFTs); qr_random returns the phase-normalized Q
 * factor of a complex Gaussian matrix. Throws std::invalid_argument for n < 1.
 */
ComplexMatrix unitary_init(Index n, UnitaryInit scheme, std::mt19937_64& rng);

/// Real orthogonal n x n matrix from the sign-normalized QR of a Gaussian matrix.
Matrix orthogonal_init(Index n, std::mt19937_64& rng);

/// n_out x n_in samples from U[-l, l], l = sqrt(6 / (n_in + n_out)).
Matrix glorot_uniform(Index n_in, Index n_out, std::mt19937_64& rng);
double glorot_limit(Index n_in, Index n_out);

/// Skew-Hermitian generator G W^H - W G^H of the Cayley step.
ComplexMatrix stiefel_generator(const ComplexMatrix& w, const ComplexMatrix& grad);

/**
 * Cayley retraction (I + lr/2 A)^-1 (I - lr/2 A) W with A from
 * stiefel_generator. The system is solved by partial-pivot LU on the real
 * block embedding (on the real matrices when W and G are real). Throws
 * NumericalError if the solve produces non-finite entries.
 */
ComplexMatrix stiefel_update(const ComplexMatrix& w, const ComplexMatrix& grad, double lr);

struct RmsPropConfig {
  double lr = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
};

/// Running mean of squared gradients for one real block.
struct RmsState {
  Matrix mean_square;
};

/// acc <- rho acc + (1 - rho) g^2; param <- param - lr g / (sqrt(acc) + eps).
void rmsprop_update(Matrix& param, const Matrix& grad, RmsState& state, const RmsPropConfig& config);

double global_norm(const std::vector<Matrix>& blocks);
/// Rescales all blocks by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_global_norm(std::vector<Matrix>& blocks, double max_norm);

struct OptimizerConfig {
  RmsPropConfig rms;
  double stiefel_lr = 1e-3;
  double clip = 5.0;
  /// Include Stiefel-constrained gradients in the clipped set.
  bool clip_stiefel = false;
};

/**
 * RMSProp for unconstrained blocks (after global-norm clipping) and Cayley
 * updates for Stiefel-constrained blocks, which see the unclipped gradient
 * unless clip_stiefel is set.
 */
class HybridOptimizer {
 public:
  HybridOptimizer(const ParameterSet& params, OptimizerConfig config);

  /// `grads` is parallel to params.items(); returns the pre-clip global norm
  /// over all gradient blocks.
  double step(ParameterSet& params, const std::vector<ComplexMatrix>& grads);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<RmsState> re_state_;
  std::vector<RmsState> im_state_;
};

}  // namespace cgrnn
