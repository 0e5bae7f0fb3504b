#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cgrnn/cells.hpp"
#include "cgrnn/manifold_opt.hpp"
#include "cgrnn/tasks.hpp"
#include "cgrnn/wirtinger.hpp"

namespace cgrnn {

inline constexpr double kMemoryThreshold = 5e-7;
inline constexpr double kAddingThreshold = 0.01;
inline constexpr int kSmoothingWindow = 50;
inline constexpr int kGraceIterations = 500;
inline constexpr int kUnitarityCheckEvery = 100;
inline constexpr double kUnitarityTolerance = 1e-6;

struct RunConfig {
  TaskKind task = TaskKind::adding;
  int T = 250;
  int n_symbols = 8;
  CellConfig cell;
  UnitaryInit init = UnitaryInit::component_product;
  OptimizerConfig optimizer;
  int iterations = 20000;
  int batch = 50;
  std::uint64_t seed = 0;
  std::string out_path;
  bool early_stop = true;
  int grace = kGraceIterations;
  int smoothing_window = kSmoothingWindow;
  /// Convergence threshold; the task default when unset.
  std::optional<double> threshold;
  /// Differentiate through the generic tape instead of the fused sequence pass.
  bool tape_gradients = false;

  /// Sets the cell's input/output sizes from the task.
  void apply_task_dims();
  double convergence_threshold() const;
  /// Canonical text used for hashing and the summary record.
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct IterationRecord {
  int iter = 0;
  double loss = 0.0;
  double unitarity_error = 0.0;
  double grad_norm = 0.0;
};

struct RunRecord {
  std::uint64_t config_hash = 0;
  std::string config;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> history;
  bool converged = false;
  std::optional<int> iters_to_converge;
  bool diverged = false;
  std::optional<int> diverged_at;
  std::string fault;
  double wall_ms = 0.0;
  Index param_count = 0;
  double threshold = 0.0;
  int smoothing_window = kSmoothingWindow;
  /// Smoothed loss over the last window of the run (NaN when empty or diverged).
  double final_smoothed_loss = 0.0;
  /// (iteration, max unitarity error over constrained blocks) every 100 iterations.
  std::vector<std::pair<int, double>> unitarity_checks;

  std::vector<double> losses() const;
};

struct ConvergenceResult {
  bool converged = false;
  std::optional<std::size_t> iteration;
};

/// Trailing mean over the last `window` entries ending at each index.
std::vector<double> smoothed(const std::vector<double>& history, int window = kSmoothingWindow);

/// First iteration whose trailing-window mean is below the threshold.
ConvergenceResult check_convergence(const std::vector<double>& history, double threshold,
                                    int window = kSmoothingWindow);
ConvergenceResult check_convergence(const std::vector<double>& history, TaskKind kind,
                                    int window = kSmoothingWindow);

/// Unrolls the cell over a batch and returns the scalar loss node.
ad::NodeId build_batch_loss(CellGraph& graph, const TaskBatch& batch);

TaskBatch generate_batch(const RunConfig& config, std::mt19937_64& rng);

/// Called after every iteration with the record just appended.
using ProgressFn = std::function<void(const IterationRecord&)>;

/**
 * Trains one model. NaN/Inf losses or gradients and unitarity violations end
 * the run with diverged set; they never throw. Writes line-delimited JSON to
 * config.out_path when it is non-empty.
 */
RunRecord train_run(const RunConfig& config, const ProgressFn& progress = {});

/// Trainable real scalars of the cell and output head for the config's task.
Index param_count(const RunConfig& config);

std::string summary_json(const RunRecord& record);
std::string iteration_json(const IterationRecord& record);

struct GradCheckRequest {
  CellConfig cell;
  int steps = 10;
  int batch = 2;
  std::uint64_t seed = 0;
  TaskKind task = TaskKind::adding;
};

/**
 * Gradient check of a full unrolled sequence loss over every parameter block.
 * Parameters start from the training initialization with biases and gate
 * coefficients jittered so gates and modReLU thresholds sit in their
 * responsive range.
 */
ad::GradCheckReport check_grad(const GradCheckRequest& request, double tolerance = 1e-5);

}  // namespace cgrnn
