// Acceptance checks. Each criterion prints one line:
//   criterion N: PASS|FAIL|SKIP  <measurements>
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cgrnn/harness.hpp"
#include "cgrnn/sweep.hpp"

using namespace cgrnn;

namespace {

struct Outcome {
  enum Status { pass, fail, skip } status = fail;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix gaussian(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

ComplexMatrix cgaussian(Index r, Index c, std::mt19937_64& rng) {
  Matrix re = gaussian(r, c, rng);
  Matrix im = gaussian(r, c, rng);
  return {std::move(re), std::move(im)};
}

// ---------------------------------------------------------------- criterion 1

Outcome gradient_correctness() {
  struct Arm {
    CellKind kind;
    GateKind gate;
  };
  const std::vector<Arm> arms{{CellKind::basic_complex, GateKind::free}, {CellKind::urnn, GateKind::free},
                              {CellKind::cgrnn, GateKind::product},       {CellKind::cgrnn, GateKind::tied1},
                              {CellKind::cgrnn, GateKind::tied2},         {CellKind::cgrnn, GateKind::free},
                              {CellKind::gru_real, GateKind::free},       {CellKind::free_real, GateKind::free}};
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string failures;
  int count = 0;
  for (const Arm& arm : arms) {
    for (NonlinKind nl : {NonlinKind::modrelu, NonlinKind::hirose}) {
      GradCheckRequest req;
      req.cell.kind = arm.kind;
      req.cell.gate = arm.gate;
      req.cell.nonlin = nl;
      req.cell.n_h = 4;
      req.steps = 10;
      req.batch = 2;
      const auto report = check_grad(req, 1e-5);
      worst = std::max(worst, report.max_rel_error);
      ++count;
      if (!report.passed) {
        failures += " " + to_string(arm.kind) + "/" + to_string(arm.gate) + "/" + to_string(nl);
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.status = failures.empty() && secs < 30.0 ? Outcome::pass : Outcome::fail;
  o.detail = std::to_string(count) + " configurations, max rel error " + fmt("%.2e", worst) +
             " (< 1e-5), " + fmt("%.1f", secs) + " s (< 30 s)";
  if (!failures.empty()) o.detail += ", failed:" + failures;
  return o;
}

// ---------------------------------------------------------------- criterion 2

Outcome unitarity_preservation() {
  std::mt19937_64 rng(2);
  ComplexMatrix w = unitary_init(80, UnitaryInit::component_product, rng);
  const auto start = std::chrono::steady_clock::now();
  double worst = unitarity_error(w);
  for (int k = 0; k < 1000; ++k) {
    w = stiefel_update(w, cgaussian(80, 80, rng), 1e-3);
    worst = std::max(worst, unitarity_error(w));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.status = worst < 1e-6 && secs < 60.0 ? Outcome::pass : Outcome::fail;
  o.detail = "1000 Cayley steps at n=80, max unitarity error " + fmt("%.2e", worst) + " (< 1e-6), " +
             fmt("%.1f", secs) + " s (< 60 s)";
  return o;
}

// ---------------------------------------------------------------- criterion 3

Outcome block_embedding() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 12);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const Index m = dim(rng), n = dim(rng), p = dim(rng);
    if (k % 2 == 0) {
      const ComplexMatrix a = cgaussian(m, n, rng), b = cgaussian(n, p, rng);
      worst = std::max(worst, (block_embed(cmatmul(a, b)) - block_embed(a) * block_embed(b)).cwiseAbs().maxCoeff());
    } else {
      // Elementwise product: each entry is a 1x1 block product.
      const ComplexMatrix a = cgaussian(m, n, rng), b = cgaussian(m, n, rng);
      const ComplexMatrix c = cmul(a, b);
      for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
          const ComplexMatrix ea{Matrix::Constant(1, 1, a.re()(i, j)), Matrix::Constant(1, 1, a.im()(i, j))};
          const ComplexMatrix eb{Matrix::Constant(1, 1, b.re()(i, j)), Matrix::Constant(1, 1, b.im()(i, j))};
          const Matrix oracle = block_embed(ea) * block_embed(eb);
          worst = std::max({worst, std::abs(oracle(0, 0) - c.re()(i, j)), std::abs(oracle(1, 0) - c.im()(i, j))});
        }
      }
    }
  }
  Outcome o;
  o.status = worst < 1e-12 ? Outcome::pass : Outcome::fail;
  o.detail = "200 random cmatmul/cmul cases, max deviation " + fmt("%.2e", worst) + " (< 1e-12)";
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome adding_baseline() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4);
  const AddingSpec spec{250};
  double sum = 0.0;
  Index count = 0;
  for (int chunk = 0; chunk < 100; ++chunk) {
    const TaskBatch b = gen_adding(spec, 1000, rng);
    sum += (b.targets.values.array() - 1.0).square().sum();
    count += b.batch();
  }
  const double mse = sum / double(count);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  Outcome o;
  o.status = std::abs(mse - 0.1667) <= 0.005 && secs < 10.0 ? Outcome::pass : Outcome::fail;
  o.detail = "constant-1 predictor MSE over " + std::to_string(count) + " sequences = " + fmt("%.4f", mse) +
             " (0.1667 +- 0.005), " + fmt("%.1f", secs) + " s (< 10 s)";
  return o;
}

// ------------------------------------------------------------ training runs

constexpr int kSeeds = 5;

RunConfig desk(TaskKind task, CellKind kind, int n_h, NonlinKind nl, bool stiefel) {
  RunConfig c;
  c.task = task;
  c.T = task == TaskKind::adding ? 100 : 50;
  c.n_symbols = 8;
  c.cell.kind = kind;
  c.cell.n_h = n_h;
  c.cell.gate = GateKind::free;
  c.cell.nonlin = nl;
  c.cell.stiefel = stiefel;
  c.iterations = 20000;
  c.batch = 50;
  // cgRNN arms train the whole budget so final losses compare like for like;
  // convergence iterations are unaffected, so criteria 5 and 6 reuse them.
  c.early_stop = kind != CellKind::cgrnn;
  return c;
}

double memory_threshold() {
  std::mt19937_64 rng(6);
  return baseline_loss(TaskKind::memory, MemorySpec{50, 8}, rng, 20000).value / 10.0;
}

// Runs are shared between criteria 5-7 within one process.
class RunCache {
 public:
  const RunRecord& get(RunConfig c, std::uint64_t seed) {
    c.seed = seed;
    const std::string key = c.canonical();
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const RunRecord r = train_run(c);
    std::fprintf(stderr, "  [%s seed %llu] %s, %zu iterations, final smoothed %.4g, %.0f s\n",
                 label(c).c_str(), static_cast<unsigned long long>(seed),
                 r.diverged    ? ("diverged at " + std::to_string(r.diverged_at.value_or(-1))).c_str()
                 : r.converged ? ("converged at " + std::to_string(*r.iters_to_converge)).c_str()
                               : "not converged",
                 r.history.size(), r.final_smoothed_loss, r.wall_ms / 1000.0);
    return runs_.emplace(key, r).first->second;
  }

  static std::string label(const RunConfig& c) {
    return to_string(c.task) + " " + to_string(c.cell.kind) + "-" + std::to_string(c.cell.n_h) + " " +
           to_string(c.cell.nonlin) + (c.cell.stiefel ? "+stiefel" : "");
  }

 private:
  std::map<std::string, RunRecord> runs_;
};

std::string seeds_line(const std::vector<bool>& ok) {
  std::string s;
  for (bool b : ok) s += b ? '+' : '.';
  return s;
}

// ---------------------------------------------------------------- criterion 5

Outcome adding_convergence(RunCache& cache) {
  RunConfig cg = desk(TaskKind::adding, CellKind::cgrnn, 40, NonlinKind::modrelu, true);
  RunConfig ur = desk(TaskKind::adding, CellKind::urnn, 70, NonlinKind::modrelu, true);
  ur.threshold = 0.05;
  std::vector<bool> cg_ok, ur_ok;
  double cg_iters = 0.0;
  for (int s = 1; s <= kSeeds; ++s) {
    const RunRecord& a = cache.get(cg, s);
    const bool conv = a.converged && !a.diverged;
    cg_ok.push_back(conv);
    if (conv) cg_iters += *a.iters_to_converge;
    // Staying above 0.05 means the smoothed loss never crossed it.
    const RunRecord& b = cache.get(ur, s);
    ur_ok.push_back(!b.converged);
  }
  const auto n_cg = std::count(cg_ok.begin(), cg_ok.end(), true);
  const auto n_ur = std::count(ur_ok.begin(), ur_ok.end(), true);
  Outcome o;
  o.status = n_cg >= 4 && n_ur >= 4 ? Outcome::pass : Outcome::fail;
  o.detail = "cgRNN-40 below 0.01 on " + std::to_string(n_cg) + "/5 [" + seeds_line(cg_ok) + "]" +
             (n_cg > 0 ? ", mean " + fmt("%.0f", cg_iters / double(n_cg)) + " iterations" : "") +
             "; uRNN-70 stays above 0.05 on " + std::to_string(n_ur) + "/5 [" + seeds_line(ur_ok) + "]";
  return o;
}

// ---------------------------------------------------------------- criterion 6

Outcome memory_convergence(RunCache& cache, double threshold) {
  RunConfig cg = desk(TaskKind::memory, CellKind::cgrnn, 40, NonlinKind::modrelu, true);
  cg.threshold = threshold;
  std::vector<bool> ok;
  double iters = 0.0;
  for (int s = 1; s <= kSeeds; ++s) {
    const RunRecord& r = cache.get(cg, s);
    const bool conv = r.converged && !r.diverged;
    ok.push_back(conv);
    if (conv) iters += *r.iters_to_converge;
  }
  const auto n = std::count(ok.begin(), ok.end(), true);
  Outcome o;
  o.status = n >= 4 ? Outcome::pass : Outcome::fail;
  o.detail = "cgRNN-40 below baseline/10 = " + fmt("%.4f", threshold) + " on " + std::to_string(n) + "/5 [" +
             seeds_line(ok) + "]" + (n > 0 ? ", mean " + fmt("%.0f", iters / double(n)) + " iterations" : "");
  return o;
}

// ---------------------------------------------------------------- criterion 7

// A run that diverged or stopped on a unitarity fault ranks as worst.
double final_loss(const RunRecord& r) {
  return r.diverged || !std::isfinite(r.final_smoothed_loss) ? INFINITY : r.final_smoothed_loss;
}

Outcome nonlinearity_interaction(RunCache& cache, double memory_threshold) {
  std::string detail;
  bool all = true;
  for (TaskKind task : {TaskKind::adding, TaskKind::memory}) {
    auto arm = [&](NonlinKind nl, bool stiefel) {
      RunConfig c = desk(task, CellKind::cgrnn, 40, nl, stiefel);
      if (task == TaskKind::memory) c.threshold = memory_threshold;
      return c;
    };
    const RunConfig ms = arm(NonlinKind::modrelu, true), hs = arm(NonlinKind::hirose, true);
    const RunConfig mn = arm(NonlinKind::modrelu, false), hn = arm(NonlinKind::hirose, false);
    std::vector<bool> with, without;
    for (int s = 1; s <= kSeeds; ++s) {
      with.push_back(final_loss(cache.get(ms, s)) <= final_loss(cache.get(hs, s)));
      const RunRecord& m = cache.get(mn, s);
      without.push_back(m.diverged || final_loss(m) > final_loss(cache.get(hn, s)));
    }
    const auto a = std::count(with.begin(), with.end(), true);
    const auto b = std::count(without.begin(), without.end(), true);
    all = all && a >= 3 && b >= 3;
    if (!detail.empty()) detail += "; ";
    detail += to_string(task) + ": modReLU+stiefel <= hirose+stiefel on " + std::to_string(a) + "/5 [" +
              seeds_line(with) + "], modReLU worse than hirose without stiefel on " + std::to_string(b) +
              "/5 [" + seeds_line(without) + "]";
  }
  return {all ? Outcome::pass : Outcome::fail, detail};
}

// ---------------------------------------------------------------- criterion 9

Outcome full_scale(bool run_it) {
  const std::string path = std::string(CGRNN_SOURCE_DIR) + "/configs/table1.conf";
  SweepPlan plan;
  try {
    plan = parse_sweep_file(path);
  } catch (const std::exception& e) {
    return {Outcome::fail, std::string("cannot load sweep config: ") + e.what()};
  }
  const auto cells = expand(plan);
  std::set<std::string> variants;
  std::size_t runs = 0;
  bool t250 = true;
  for (const auto& c : cells) {
    variants.insert(c.label.substr(0, c.label.find('/')));
    runs += c.runs.size();
    for (const auto& r : c.runs) t250 = t250 && r.T == 250 && r.iterations == 20000;
  }
  const bool shape_ok = variants.size() == 6 && cells.size() == 12 && plan.seeds.size() == 20 && t250;
  const std::string shape = "configs/table1.conf expands to " + std::to_string(variants.size()) +
                            " configurations x 2 tasks x " + std::to_string(plan.seeds.size()) + " seeds = " +
                            std::to_string(runs) + " runs at T=250";
  if (!shape_ok) return {Outcome::fail, shape + " (expected 6 x 2 x 20)"};
  if (!run_it) return {Outcome::skip, shape + "; full sweep not run (pass --full)"};

  const auto stats = run_sweep(plan, [](const std::string& label, const RunRecord& r) {
    std::fprintf(stderr, "  [%s seed %llu] %s\n", label.c_str(), static_cast<unsigned long long>(r.seed),
                 r.converged ? "converged" : "not converged");
  });
  auto find = [&](const std::string& label) {
    for (const auto& s : stats)
      if (s.label == label) return s;
    return SweepStats{};
  };
  const SweepStats free_add = find("free/task=adding");
  const SweepStats urnn_add = find("urnn/task=adding");
  const SweepStats urnn_mem = find("urnn/task=memory");
  const bool ok = free_add.frac_conv > 0.5 && urnn_add.converged == 0 && urnn_mem.frac_conv == 1.0;
  return {ok ? Outcome::pass : Outcome::fail,
          "free adding frac_conv " + fmt("%.2f", free_add.frac_conv) + " (> 0.5), uRNN adding " +
              std::to_string(urnn_add.converged) + " converged (0), uRNN memory frac_conv " +
              fmt("%.2f", urnn_mem.frac_conv) + " (1.0)\n" + format_summary(stats)};
}

// ---------------------------------------------------------------- criterion 8

Outcome parameter_parity() {
  auto count = [](CellKind kind, int n_h) {
    RunConfig c;
    c.task = TaskKind::memory;
    c.cell.kind = kind;
    c.cell.n_h = n_h;
    return param_count(c);
  };
  const Index cg = count(CellKind::cgrnn, 80), ur = count(CellKind::urnn, 140), gru = count(CellKind::gru_real, 112);
  auto in = [](Index k) { return k >= 40000 && k <= 48000; };
  return {in(cg) && in(ur) && in(gru) ? Outcome::pass : Outcome::fail,
          "cgRNN-80 " + std::to_string(cg) + ", uRNN-140 " + std::to_string(ur) + ", GRU-112 " +
              std::to_string(gru) + " (each in [40000, 48000])"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  bool full = false;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_flag("--full", full, "also run the full-scale sweep for criterion 9");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::sort(selected.begin(), selected.end());
  selected.erase(std::unique(selected.begin(), selected.end()), selected.end());

  RunCache cache;
  double mem_threshold = NAN;
  auto threshold = [&] {
    if (std::isnan(mem_threshold)) mem_threshold = memory_threshold();
    return mem_threshold;
  };
  bool failed = false;
  for (int c : selected) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      switch (c) {
        case 1: o = gradient_correctness(); break;
        case 2: o = unitarity_preservation(); break;
        case 3: o = block_embedding(); break;
        case 4: o = adding_baseline(); break;
        case 5: o = adding_convergence(cache); break;
        case 6: o = memory_convergence(cache, threshold()); break;
        case 7: o = nonlinearity_interaction(cache, threshold()); break;
        case 8: o = parameter_parity(); break;
        case 9: o = full_scale(full); break;
      }
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* status = o.status == Outcome::pass ? "PASS" : o.status == Outcome::skip ? "SKIP" : "FAIL";
    std::printf("criterion %d: %s  %s  [%.1f s]\n", c, status, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed = failed || o.status == Outcome::fail;
  }
  return failed ? 1 : 0;
}
