#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "cgrnn/cells.hpp"

namespace cgrnn {

/// Memory (copy) task: n symbols, then T-1 blanks, a delimiter and n blanks.
struct MemorySpec {
  int T = 250;
  int n = 8;

  static constexpr int kDataSymbols = 8;
  static constexpr int kBlank = 8;
  static constexpr int kDelimiter = 9;
  static constexpr int kInputSymbols = 10;
  /// Output classes: the data symbols plus blank.
  static constexpr int kOutputClasses = 9;

  int length() const { return T + 2 * n; }
  int delimiter_position() const { return n + T - 1; }
};

/// Adding task: a U[0,1] value channel and a two-marker indicator channel.
struct AddingSpec {
  int T = 250;
  static constexpr int kInputs = 2;
};

/**
 * A generated batch. inputs[t] is features x batch for step t; mask is
 * steps x batch with 1 where the loss scores that step.
 */
struct TaskBatch {
  TaskKind kind = TaskKind::adding;
  std::vector<Matrix> inputs;
  SequenceTargets targets;
  Matrix mask;

  Index steps() const { return static_cast<Index>(inputs.size()); }
  Index batch() const { return inputs.empty() ? 0 : inputs.front().cols(); }
  Index features() const { return inputs.empty() ? 0 : inputs.front().rows(); }
};

/// Throws std::invalid_argument for T < 1 or n < 1.
TaskBatch gen_memory(const MemorySpec& spec, Index batch, std::mt19937_64& rng);
/// Throws std::invalid_argument for T < 2.
TaskBatch gen_adding(const AddingSpec& spec, Index batch, std::mt19937_64& rng);

struct BaselineEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Analytic 1/6 for adding; n ln 8 / (T + 2n) for memory.
double baseline_loss_analytic(TaskKind kind, const MemorySpec& memory);

/**
 * Loss of the naive predictor. Adding: constant 1, analytic variance 1/6.
 * Memory: Monte Carlo cross-entropy of a predictor that says blank with
 * certainty until the delimiter and is uniform over the data symbols after
 * it, averaged over `sequences` generated sequences.
 */
BaselineEstimate baseline_loss(TaskKind kind, const MemorySpec& memory, std::mt19937_64& rng,
                               Index sequences = 2000);

/// Binary dump: magic "CGTB", u32 version, u32 task, then inputs [T,B,F],
/// targets [T,B] and mask [T,B], each as u32 rank, u64 dims, row-major f64.
void write_batch(std::ostream& out, const TaskBatch& batch);
TaskBatch read_batch(std::istream& in);
void write_batch_file(const std::string& path, const TaskBatch& batch);
TaskBatch read_batch_file(const std::string& path);

/// Deterministic per-iteration stream derived from a run seed.
std::mt19937_64 split_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace cgrnn
