#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cgrnn/harness.hpp"

namespace cgrnn {

/**
 * Sweep file format, one `key = value` per line, `#` starts a comment:
 *
 *   iters = 20000
 *   task = memory, adding          # comma list: an axis
 *   seeds = 1-20                   # range or comma list
 *   run.urnn.cell = urnn           # keys under run.<label> define a variant
 *   run.urnn.hidden = 140
 *
 * Plain keys set the base config; each variant starts from the base. The
 * sweep runs variants x axis product x seeds; with no variants the base is
 * the single variant "base".
 */
struct SweepPlan {
  std::vector<std::pair<std::string, RunConfig>> variants;
  /// Axis keys with their values, in file order.
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  std::vector<std::uint64_t> seeds;
  int threads = 1;
  /// Per-run JSONL and summary.tsv go here when non-empty.
  std::string out_dir;
};

/// Sets one RunConfig field from its CLI-style key. Throws std::invalid_argument.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

SweepPlan parse_sweep(std::istream& in);
SweepPlan parse_sweep_file(const std::string& path);

/// One (variant, axis assignment) cell with its per-seed configs.
struct SweepCell {
  std::string label;
  std::vector<RunConfig> runs;
};

std::vector<SweepCell> expand(const SweepPlan& plan);

struct SweepStats {
  std::string label;
  int runs = 0;
  int converged = 0;
  int diverged = 0;
  double frac_conv = 0.0;
  /// Mean iters_to_converge over converged runs; none when nothing converged.
  std::optional<double> avg_iters;
};

SweepStats aggregate(const std::string& label, const std::vector<RunRecord>& records);

/// Called under the sink lock after each finished run.
using SweepProgressFn = std::function<void(const std::string& label, const RunRecord&)>;

/// Runs every cell; a failing run counts as non-converged and never aborts.
std::vector<SweepStats> run_sweep(const SweepPlan& plan, const SweepProgressFn& progress = {});

/// Tab-separated: label, runs, frac_conv, avg_iters ("-" when none), diverged.
std::string format_summary(const std::vector<SweepStats>& stats);

}  // namespace cgrnn
