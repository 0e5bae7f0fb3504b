#include "cgrnn/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cgrnn/fused.hpp"

namespace cgrnn {

using json = nlohmann::json;

void RunConfig::apply_task_dims() {
  if (task == TaskKind::memory) {
    cell.n_x = MemorySpec::kInputSymbols;
    cell.n_o = MemorySpec::kOutputClasses;
  } else {
    cell.n_x = AddingSpec::kInputs;
    cell.n_o = 1;
  }
}

double RunConfig::convergence_threshold() const {
  if (threshold) return *threshold;
  return task == TaskKind::memory ? kMemoryThreshold : kAddingThreshold;
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "task=" << to_string(task) << ";T=" << T;
  if (task == TaskKind::memory) os << ";n_symbols=" << n_symbols;
  os << ";cell=" << to_string(cell.kind) << ";hidden=" << cell.n_h
     << ";nonlin=" << to_string(cell.nonlin);
  if (cell.nonlin == NonlinKind::hirose) os << ";m=" << cell.hirose_m;
  if (cell.kind == CellKind::cgrnn || cell.kind == CellKind::free_real) {
    os << ";gate=" << to_string(cell.gate) << ";learnable_coeffs=" << cell.learnable_gate_coeffs;
  }
  os << ";stiefel=" << cell.stiefel << ";stiefel_gates=" << cell.stiefel_gates
     << ";init=" << to_string(init) << ";lr=" << optimizer.rms.lr
     << ";stiefel_lr=" << optimizer.stiefel_lr << ";rms_decay=" << optimizer.rms.decay
     << ";rms_eps=" << optimizer.rms.epsilon << ";clip=" << optimizer.clip
     << ";clip_stiefel=" << optimizer.clip_stiefel << ";iters=" << iterations
     << ";batch=" << batch << ";seed=" << seed << ";early_stop=" << early_stop
     << ";grace=" << grace << ";window=" << smoothing_window
     << ";threshold=" << convergence_threshold();
  if (tape_gradients) os << ";tape_gradients=1";
  return os.str();
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> RunRecord::losses() const {
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& r : history) out.push_back(r.loss);
  return out;
}

std::vector<double> smoothed(const std::vector<double>& history, int window) {
  if (window < 1) throw std::invalid_argument("smoothed: window must be >= 1");
  std::vector<double> out(history.size());
  double running = 0.0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    running += history[i];
    if (i >= static_cast<std::size_t>(window)) running -= history[i - static_cast<std::size_t>(window)];
    const std::size_t n = std::min(i + 1, static_cast<std::size_t>(window));
    out[i] = running / static_cast<double>(n);
  }
  return out;
}

ConvergenceResult check_convergence(const std::vector<double>& history, double threshold,
                                    int window) {
  const std::vector<double> s = smoothed(history, window);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < threshold) return {true, i};
  }
  return {};
}

ConvergenceResult check_convergence(const std::vector<double>& history, TaskKind kind, int window) {
  return check_convergence(history, kind == TaskKind::memory ? kMemoryThreshold : kAddingThreshold,
                           window);
}

ad::NodeId build_batch_loss(CellGraph& graph, const TaskBatch& batch) {
  ad::CNode h = graph.initial_state(batch.batch());
  std::vector<ad::NodeId> outputs;
  for (Index t = 0; t < batch.steps(); ++t) {
    h = graph.step(h, graph.input(batch.inputs[static_cast<std::size_t>(t)]));
    if (batch.kind == TaskKind::memory) outputs.push_back(graph.output(h));
  }
  if (batch.kind == TaskKind::adding) outputs.push_back(graph.output(h));
  return sequence_loss(graph.tape(), outputs, batch.targets, batch.kind);
}

TaskBatch generate_batch(const RunConfig& config, std::mt19937_64& rng) {
  if (config.task == TaskKind::memory) {
    return gen_memory(MemorySpec{config.T, config.n_symbols}, config.batch, rng);
  }
  return gen_adding(AddingSpec{config.T}, config.batch, rng);
}

namespace {

constexpr std::uint64_t kInitStream = 0xffffffffULL;

std::vector<ComplexMatrix> collect_gradients(const ParameterSet& params, const CellGraph& graph,
                                             const ad::Gradients& grads) {
  std::vector<ComplexMatrix> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ad::CNode leaf = graph.leaves()[i];
    if (params.items()[i].is_complex) {
      out.emplace_back(grads[leaf.re], grads[leaf.im]);
    } else {
      out.push_back(ComplexMatrix::from_real(grads[leaf.re]));
    }
  }
  return out;
}

double max_constrained_unitarity(const ParameterSet& params) {
  double worst = 0.0;
  for (const auto& p : params.items()) {
    if (p.constraint == Constraint::stiefel) worst = std::max(worst, unitarity_error(p.value));
  }
  return worst;
}

bool has_constrained(const ParameterSet& params) {
  for (const auto& p : params.items()) {
    if (p.constraint == Constraint::stiefel) return true;
  }
  return false;
}

double json_number(double v) { return v; }

json nullable(double v) {
  if (!std::isfinite(v)) return nullptr;
  return json_number(v);
}

}  // namespace

std::string iteration_json(const IterationRecord& r) {
  json j;
  j["iter"] = r.iter;
  j["loss"] = nullable(r.loss);
  j["unitarity_error"] = nullable(r.unitarity_error);
  j["grad_norm"] = nullable(r.grad_norm);
  return j.dump();
}

std::string summary_json(const RunRecord& r) {
  json j;
  j["summary"] = true;
  j["converged"] = r.converged;
  j["iters_to_converge"] = r.iters_to_converge ? json(*r.iters_to_converge) : json(nullptr);
  j["wall_ms"] = r.wall_ms;
  j["param_count"] = r.param_count;
  j["config"] = r.config;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["diverged"] = r.diverged;
  j["diverged_at"] = r.diverged_at ? json(*r.diverged_at) : json(nullptr);
  if (!r.fault.empty()) j["fault"] = r.fault;
  j["threshold"] = r.threshold;
  j["smoothing_window"] = r.smoothing_window;
  j["iterations_run"] = r.history.size();
  j["final_smoothed_loss"] = nullable(r.final_smoothed_loss);
  json checks = json::array();
  for (const auto& [it, err] : r.unitarity_checks) checks.push_back({it, err});
  j["unitarity_checks"] = checks;
  return j.dump();
}

Index param_count(const RunConfig& config) {
  RunConfig c = config;
  c.apply_task_dims();
  std::mt19937_64 rng(0);
  return init_params(c.cell, c.init, rng).scalar_count();
}

RunRecord train_run(const RunConfig& input, const ProgressFn& progress) {
  RunConfig config = input;
  config.apply_task_dims();
  const auto start = std::chrono::steady_clock::now();

  RunRecord record;
  record.config = config.canonical();
  record.config_hash = config.hash();
  record.seed = config.seed;
  record.threshold = config.convergence_threshold();
  record.smoothing_window = config.smoothing_window;

  std::mt19937_64 init_rng = split_rng(config.seed, kInitStream);
  ParameterSet params = init_params(config.cell, config.init, init_rng);
  record.param_count = params.scalar_count();
  HybridOptimizer optimizer(params, config.optimizer);
  const bool constrained = has_constrained(params);

  std::ofstream out;
  if (!config.out_path.empty()) {
    out.open(config.out_path);
    if (!out) throw std::runtime_error("train_run: cannot open " + config.out_path);
  }

  const auto window = static_cast<std::size_t>(config.smoothing_window);
  double running = 0.0;
  std::optional<int> stop_at;
  for (int it = 0; it < config.iterations; ++it) {
    std::mt19937_64 batch_rng = split_rng(config.seed, static_cast<std::uint64_t>(it));
    const TaskBatch batch = generate_batch(config, batch_rng);

    IterationRecord row;
    row.iter = it;
    try {
      std::vector<ComplexMatrix> grads;
      if (config.tape_gradients) {
        ad::Tape tape;
        CellGraph graph(tape, config.cell, params, true);
        const ad::NodeId loss = build_batch_loss(graph, batch);
        row.loss = tape.scalar(loss);
        if (!std::isfinite(row.loss)) throw NumericalError("non-finite loss");
        grads = collect_gradients(params, graph, tape.backward(loss));
      } else {
        LossAndGrad lg = fused_loss_and_grad(config.cell, params, batch);
        row.loss = lg.loss;
        grads = std::move(lg.grads);
      }
      row.grad_norm = optimizer.step(params, grads);
      row.unitarity_error = unitarity_error(params.at("W").value);
    } catch (const NumericalError& e) {
      record.diverged = true;
      record.diverged_at = it;
      record.fault = e.what();
      if (!std::isfinite(row.loss)) row.loss = std::numeric_limits<double>::quiet_NaN();
      record.history.push_back(row);
      if (out) out << iteration_json(row) << '\n';
      if (progress) progress(row);
      break;
    }
    record.history.push_back(row);
    if (out) out << iteration_json(row) << '\n';
    if (progress) progress(row);

    if (constrained && (it + 1) % kUnitarityCheckEvery == 0) {
      const double err = max_constrained_unitarity(params);
      record.unitarity_checks.emplace_back(it, err);
      if (!(err < kUnitarityTolerance)) {
        record.diverged = true;
        record.diverged_at = it;
        record.fault = "unitarity error " + std::to_string(err) + " exceeds tolerance";
        break;
      }
    }

    running += row.loss;
    const std::size_t n = record.history.size();
    if (n > window) running -= record.history[n - 1 - window].loss;
    const double smooth = running / static_cast<double>(std::min(n, window));
    if (!record.converged && smooth < record.threshold) {
      record.converged = true;
      record.iters_to_converge = it;
      stop_at = it + config.grace;
    }
    if (config.early_stop && stop_at && it >= *stop_at) break;
  }

  if (!record.diverged && !record.history.empty()) {
    const std::size_t n = record.history.size();
    const std::size_t k = std::min(n, window);
    double tail = 0.0;
    for (std::size_t i = n - k; i < n; ++i) tail += record.history[i].loss;
    record.final_smoothed_loss = tail / static_cast<double>(k);
  } else {
    record.final_smoothed_loss = std::numeric_limits<double>::quiet_NaN();
  }
  record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                       .count();
  if (out) out << summary_json(record) << '\n';
  return record;
}

ad::GradCheckReport check_grad(const GradCheckRequest& request, double tolerance) {
  RunConfig run;
  run.task = request.task;
  run.cell = request.cell;
  run.batch = request.batch;
  run.seed = request.seed;
  if (request.task == TaskKind::memory) {
    run.n_symbols = 2;
    run.T = request.steps - 2 * run.n_symbols;
    if (run.T < 1) throw std::invalid_argument("check_grad: memory needs at least 5 steps");
  } else {
    run.T = request.steps;
  }
  run.apply_task_dims();

  std::mt19937_64 rng = split_rng(request.seed, kInitStream);
  ParameterSet params = init_params(run.cell, run.init, rng);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (auto& p : params.items()) {
    const bool bias = p.value.cols() == 1 && p.name != "W_o";
    const bool coeff = p.name.rfind("alpha", 0) == 0 || p.name.rfind("beta", 0) == 0;
    if (!bias && !coeff) continue;
    const double amp = p.name == "modrelu_b" ? 0.3 : 1.0;
    Matrix re = p.value.re().unaryExpr([&](double) { return amp * jitter(rng); });
    Matrix im = p.is_complex ? Matrix(p.value.im().unaryExpr([&](double) { return amp * jitter(rng); }))
                             : Matrix(p.value.im());
    p.value = ComplexMatrix(std::move(re), std::move(im));
  }
  std::mt19937_64 batch_rng = split_rng(request.seed, 0);
  const TaskBatch batch = generate_batch(run, batch_rng);

  std::vector<ad::NamedBlock> blocks;
  for (const auto& p : params.items()) {
    if (p.is_complex) {
      blocks.push_back({p.name + ".re", p.value.re()});
      blocks.push_back({p.name + ".im", p.value.im()});
    } else {
      blocks.push_back({p.name, p.value.re()});
    }
  }
  const CellConfig cell = run.cell;
  auto build = [&params, &batch, cell](ad::Tape& tape, std::span<const ad::NodeId> leaves) {
    std::vector<ad::CNode> nodes;
    std::size_t k = 0;
    for (const auto& p : params.items()) {
      if (p.is_complex) {
        nodes.push_back({leaves[k], leaves[k + 1]});
        k += 2;
      } else {
        nodes.push_back(ad::creal(leaves[k]));
        k += 1;
      }
    }
    CellGraph graph(tape, cell, params, std::move(nodes));
    return build_batch_loss(graph, batch);
  };
  return ad::grad_check(build, blocks, tolerance);
}

}  // namespace cgrnn
