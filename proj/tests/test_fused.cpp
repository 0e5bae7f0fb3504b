#include <doctest.h>

#include <cmath>

#include "cgrnn/fused.hpp"
#include "cgrnn/harness.hpp"
#include "support.hpp"

using namespace cgrnn;

namespace {

struct Case {
  CellKind kind;
  GateKind gate;
  NonlinKind nonlin;
  bool learn;
};

std::vector<Case> all_cases() {
  std::vector<Case> out;
  for (NonlinKind nl : {NonlinKind::modrelu, NonlinKind::hirose}) {
    out.push_back({CellKind::basic_complex, GateKind::free, nl, true});
    out.push_back({CellKind::urnn, GateKind::free, nl, true});
    for (GateKind g : {GateKind::product, GateKind::tied1, GateKind::tied2, GateKind::free}) {
      for (bool learn : {true, false}) {
        out.push_back({CellKind::cgrnn, g, nl, learn});
        out.push_back({CellKind::free_real, g, nl, learn});
      }
    }
  }
  out.push_back({CellKind::gru_real, GateKind::free, NonlinKind::modrelu, true});
  return out;
}

// Tape gradients in the same layout as fused_loss_and_grad.
std::pair<double, std::vector<ComplexMatrix>> tape_grads(const CellConfig& cfg, const ParameterSet& ps,
                                                          const TaskBatch& batch) {
  ad::Tape tape;
  CellGraph graph(tape, cfg, ps, true);
  const ad::NodeId loss = build_batch_loss(graph, batch);
  const ad::Gradients g = tape.backward(loss);
  std::vector<ComplexMatrix> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const ad::CNode leaf = graph.leaves()[i];
    const Matrix re = g[leaf.re];
    const Matrix im = leaf.is_real() ? Matrix::Zero(re.rows(), re.cols()) : g[leaf.im];
    out.emplace_back(re, im);
  }
  return {tape.scalar(loss), std::move(out)};
}

}  // namespace

TEST_CASE("fused gradients equal tape gradients for every cell") {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  for (TaskKind task : {TaskKind::adding, TaskKind::memory}) {
    for (const Case& k : all_cases()) {
      RunConfig run;
      run.task = task;
      run.T = task == TaskKind::adding ? 9 : 4;
      run.n_symbols = 2;
      run.cell.kind = k.kind;
      run.cell.n_h = 5;
      run.cell.gate = k.gate;
      run.cell.nonlin = k.nonlin;
      run.cell.learnable_gate_coeffs = k.learn;
      run.batch = 3;
      run.apply_task_dims();
      ParameterSet ps = init_params(run.cell, run.init, rng);
      for (auto& p : ps.items()) {
        if (p.value.cols() != 1 && p.name.rfind("alpha", 0) != 0 && p.name.rfind("beta", 0) != 0) continue;
        Matrix re = p.value.re().unaryExpr([&](double v) { return v + jitter(rng); });
        Matrix im = p.is_complex ? Matrix(p.value.im().unaryExpr([&](double v) { return v + jitter(rng); }))
                                 : Matrix(p.value.im());
        p.value = ComplexMatrix(re, im);
      }
      const TaskBatch batch = generate_batch(run, rng);
      const LossAndGrad fused = fused_loss_and_grad(run.cell, ps, batch);
      const auto [loss, grads] = tape_grads(run.cell, ps, batch);
      INFO(to_string(task) << " " << to_string(k.kind) << " " << to_string(k.gate) << " "
                           << to_string(k.nonlin) << " learn=" << k.learn);
      CHECK(fused.loss == doctest::Approx(loss).epsilon(1e-12));
      REQUIRE(fused.grads.size() == grads.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < grads.size(); ++i) {
        REQUIRE(fused.grads[i].rows() == grads[i].rows());
        REQUIRE(fused.grads[i].cols() == grads[i].cols());
        worst = std::max(worst, testing::max_abs_diff(fused.grads[i], grads[i]));
      }
      CHECK(worst < 1e-11);
    }
  }
}

TEST_CASE("fused pass rejects mismatched batches") {
  RunConfig run;
  run.cell.kind = CellKind::urnn;
  run.cell.n_h = 3;
  run.apply_task_dims();
  std::mt19937_64 rng(82);
  const ParameterSet ps = init_params(run.cell, run.init, rng);
  const TaskBatch memory = gen_memory({5, 2}, 2, rng);
  CHECK_THROWS_AS(fused_loss_and_grad(run.cell, ps, memory), ShapeError);
}
