#pragma once

#include <vector>

#include "cgrnn/cells.hpp"
#include "cgrnn/tasks.hpp"

namespace cgrnn {

/**
 * Whole-sequence forward pass with a hand-derived backward pass for every
 * cell kind. It computes the same loss as unrolling CellGraph on a tape, but
 * complex products run on block-embedded real weights and weight gradients
 * are accumulated in one product over all steps, which is several times
 * faster for training. Tests hold it to the tape gradients.
 */
struct LossAndGrad {
  double loss = 0.0;
  /// Parallel to params.items(); real blocks have a zero imaginary part.
  std::vector<ComplexMatrix> grads;
};

/// Throws NumericalError when the loss or a gradient is not finite.
LossAndGrad fused_loss_and_grad(const CellConfig& config, const ParameterSet& params,
                                const TaskBatch& batch);

}  // namespace cgrnn
