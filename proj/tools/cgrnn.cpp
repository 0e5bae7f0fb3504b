// Command-line front end: train, sweep, check-grad, baseline, params.

#include <cstdio>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>

#include "cgrnn/harness.hpp"
#include "cgrnn/sweep.hpp"

namespace {

using namespace cgrnn;

struct CellFlags {
  std::string cell = "cgrnn";
  int hidden = 80;
  std::string gate = "free";
  std::string nonlin = "modrelu";
  std::string stiefel = "on";
};

void add_cell_flags(CLI::App* cmd, CellFlags& f, bool with_stiefel) {
  cmd->add_option("--cell", f.cell, "basic|urnn|cgrnn|gru|free-real")
      ->check(CLI::IsMember({"basic", "urnn", "cgrnn", "gru", "free-real"}));
  cmd->add_option("--hidden", f.hidden, "state size n_h")->check(CLI::PositiveNumber);
  cmd->add_option("--gate", f.gate, "product|tied1|tied2|free")
      ->check(CLI::IsMember({"product", "tied1", "tied2", "free", "real_sigmoid"}));
  cmd->add_option("--nonlin", f.nonlin, "hirose|modrelu")->check(CLI::IsMember({"hirose", "modrelu"}));
  if (with_stiefel) {
    cmd->add_option("--stiefel", f.stiefel, "keep W unitary: on|off")->check(CLI::IsMember({"on", "off"}));
  }
}

CellConfig to_cell(const CellFlags& f) {
  CellConfig c;
  c.kind = parse_cell_kind(f.cell);
  c.n_h = f.hidden;
  c.gate = parse_gate_kind(f.gate);
  c.nonlin = parse_nonlin_kind(f.nonlin);
  c.stiefel = f.stiefel == "on";
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Complex gated recurrent networks: training, sweeps and checks"};
  app.require_subcommand(1);

  // train
  CellFlags train_cell;
  std::string train_task = "adding";
  int train_T = 250;
  int train_symbols = 8;
  std::string train_init = "component-product";
  int iters = 20000;
  int batch = 50;
  double lr = 1e-3;
  double clip = 5.0;
  std::uint64_t train_seed = 0;
  std::string out_path;
  bool no_early_stop = false;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "train one model and write JSONL records");
  train->add_option("--task", train_task, "memory|adding")->check(CLI::IsMember({"memory", "adding"}));
  train->add_option("--T", train_T, "sequence length parameter")->check(CLI::PositiveNumber);
  train->add_option("--n-symbols", train_symbols, "symbols to memorize")->check(CLI::PositiveNumber);
  add_cell_flags(train, train_cell, true);
  train->add_option("--init", train_init, "component-product|qr")
      ->check(CLI::IsMember({"component-product", "qr"}));
  train->add_option("--iters", iters)->check(CLI::NonNegativeNumber);
  train->add_option("--batch", batch)->check(CLI::PositiveNumber);
  train->add_option("--lr", lr, "learning rate for RMSProp and the Stiefel step");
  train->add_option("--clip", clip, "global gradient-norm clip");
  train->add_option("--seed", train_seed);
  train->add_option("--out", out_path, "JSONL output path");
  train->add_flag("--no-early-stop", no_early_stop, "run all iterations even after convergence");
  train->add_flag("--quiet", quiet, "no progress on stderr");

  // sweep
  std::string sweep_path;
  auto* sweep = app.add_subcommand("sweep", "run a multi-seed sweep from a config file");
  sweep->add_option("--config", sweep_path)->required()->check(CLI::ExistingFile);

  // check-grad
  CellFlags grad_cell;
  grad_cell.hidden = 4;
  int grad_steps = 10;
  int grad_batch = 2;
  std::uint64_t grad_seed = 0;
  std::string grad_task = "adding";
  auto* grad = app.add_subcommand("check-grad", "compare reverse-mode gradients with finite differences");
  add_cell_flags(grad, grad_cell, true);
  grad->add_option("--steps", grad_steps)->check(CLI::PositiveNumber);
  grad->add_option("--batch", grad_batch)->check(CLI::PositiveNumber);
  grad->add_option("--seed", grad_seed);
  grad->add_option("--task", grad_task)->check(CLI::IsMember({"memory", "adding"}));

  // baseline
  std::string base_task = "memory";
  int base_T = 250;
  int base_symbols = 8;
  auto* baseline = app.add_subcommand("baseline", "print the naive-predictor loss");
  baseline->add_option("--task", base_task)->check(CLI::IsMember({"memory", "adding"}));
  baseline->add_option("--T", base_T)->check(CLI::PositiveNumber);
  baseline->add_option("--n-symbols", base_symbols)->check(CLI::PositiveNumber);

  // params
  CellFlags count_cell;
  std::string count_task = "memory";
  auto* params = app.add_subcommand("params", "print the trainable parameter count");
  params->add_option("--task", count_task)->check(CLI::IsMember({"memory", "adding"}));
  add_cell_flags(params, count_cell, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunConfig config;
      config.task = parse_task_kind(train_task);
      config.T = train_T;
      config.n_symbols = train_symbols;
      config.cell = to_cell(train_cell);
      config.init = parse_unitary_init(train_init);
      config.iterations = iters;
      config.batch = batch;
      config.optimizer.rms.lr = lr;
      config.optimizer.stiefel_lr = lr;
      config.optimizer.clip = clip;
      config.seed = train_seed;
      config.out_path = out_path;
      config.early_stop = !no_early_stop;
      config.apply_task_dims();
      config.cell.validate();
      ProgressFn progress;
      if (!quiet) {
        progress = [](const IterationRecord& r) {
          if (r.iter % 100 == 0) {
            std::fprintf(stderr, "iter %6d  loss %.6g  |g| %.4g  unitarity %.2e\n", r.iter, r.loss,
                         r.grad_norm, r.unitarity_error);
          }
        };
      }
      const RunRecord record = train_run(config, progress);
      std::cout << summary_json(record) << '\n';
      return record.diverged ? 2 : 0;
    }
    if (*sweep) {
      const SweepPlan plan = parse_sweep_file(sweep_path);
      const auto stats = run_sweep(plan, [](const std::string& label, const RunRecord& r) {
        std::fprintf(stderr, "%s seed %llu: %s\n", label.c_str(), static_cast<unsigned long long>(r.seed),
                     r.diverged    ? "diverged"
                     : r.converged ? ("converged at " + std::to_string(*r.iters_to_converge)).c_str()
                                   : "not converged");
      });
      std::cout << format_summary(stats);
      return 0;
    }
    if (*grad) {
      GradCheckRequest req;
      req.cell = to_cell(grad_cell);
      req.steps = grad_steps;
      req.batch = grad_batch;
      req.seed = grad_seed;
      req.task = parse_task_kind(grad_task);
      const ad::GradCheckReport report = check_grad(req, 1e-5);
      for (const auto& b : report.blocks) {
        std::printf("%-14s max_rel_error %.3e  checked %d  excluded %d\n", b.name.c_str(), b.max_rel_error,
                    static_cast<int>(b.checked), static_cast<int>(b.excluded));
      }
      std::printf("max_rel_error %.3e  tolerance %.1e  %s\n", report.max_rel_error, report.tolerance,
                  report.passed ? "PASS" : "FAIL");
      return report.passed ? 0 : 1;
    }
    if (*baseline) {
      const TaskKind kind = parse_task_kind(base_task);
      const MemorySpec spec{base_T, base_symbols};
      std::mt19937_64 rng(0);
      const BaselineEstimate est = baseline_loss(kind, spec, rng);
      std::printf("%.6f\n", est.value);
      return 0;
    }
    if (*params) {
      RunConfig config;
      config.task = parse_task_kind(count_task);
      config.cell = to_cell(count_cell);
      std::cout << param_count(config) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
