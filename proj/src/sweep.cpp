#include "cgrnn/sweep.hpp"

#include <algorithm>
#include <cctype>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cgrnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("sweep: " + key + " expects on|off, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw std::invalid_argument("sweep: " + key + " expects an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw std::invalid_argument("sweep: " + key + " expects a number, got '" + v + "'");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(static_cast<std::uint64_t>(parse_int("seeds", item)));
      continue;
    }
    const int lo = parse_int("seeds", trim(item.substr(0, dash)));
    const int hi = parse_int("seeds", trim(item.substr(dash + 1)));
    if (hi < lo) throw std::invalid_argument("sweep: empty seed range '" + item + "'");
    for (int s = lo; s <= hi; ++s) out.push_back(static_cast<std::uint64_t>(s));
  }
  return out;
}

std::string sanitize(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return out;
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "task") {
    c.task = parse_task_kind(v);
  } else if (key == "T") {
    c.T = parse_int(key, v);
  } else if (key == "n_symbols" || key == "n-symbols") {
    c.n_symbols = parse_int(key, v);
  } else if (key == "cell") {
    c.cell.kind = parse_cell_kind(v);
  } else if (key == "hidden") {
    c.cell.n_h = parse_int(key, v);
  } else if (key == "gate") {
    c.cell.gate = parse_gate_kind(v);
  } else if (key == "nonlin") {
    c.cell.nonlin = parse_nonlin_kind(v);
  } else if (key == "hirose_m") {
    c.cell.hirose_m = parse_double(key, v);
  } else if (key == "learnable_coeffs") {
    c.cell.learnable_gate_coeffs = parse_bool(key, v);
  } else if (key == "stiefel") {
    c.cell.stiefel = parse_bool(key, v);
  } else if (key == "stiefel_gates") {
    c.cell.stiefel_gates = parse_bool(key, v);
  } else if (key == "init") {
    c.init = parse_unitary_init(v);
  } else if (key == "iters") {
    c.iterations = parse_int(key, v);
  } else if (key == "batch") {
    c.batch = parse_int(key, v);
  } else if (key == "lr") {
    c.optimizer.rms.lr = parse_double(key, v);
    c.optimizer.stiefel_lr = c.optimizer.rms.lr;
  } else if (key == "stiefel_lr") {
    c.optimizer.stiefel_lr = parse_double(key, v);
  } else if (key == "clip") {
    c.optimizer.clip = parse_double(key, v);
  } else if (key == "clip_stiefel") {
    c.optimizer.clip_stiefel = parse_bool(key, v);
  } else if (key == "early_stop") {
    c.early_stop = parse_bool(key, v);
  } else if (key == "grace") {
    c.grace = parse_int(key, v);
  } else if (key == "window") {
    c.smoothing_window = parse_int(key, v);
  } else if (key == "threshold") {
    c.threshold = parse_double(key, v);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(parse_int(key, v));
  } else {
    throw std::invalid_argument("sweep: unknown key '" + key + "'");
  }
}

SweepPlan parse_sweep(std::istream& in) {
  SweepPlan plan;
  RunConfig base;
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> variant_keys;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("sweep: line " + std::to_string(lineno) + " has no '='");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw std::invalid_argument("sweep: line " + std::to_string(lineno) + " is incomplete");
    }

    if (key == "seeds") {
      plan.seeds = parse_seeds(value);
    } else if (key == "threads") {
      plan.threads = parse_int(key, value);
    } else if (key == "out_dir") {
      plan.out_dir = value;
    } else if (key.rfind("run.", 0) == 0) {
      const auto dot = key.find('.', 4);
      if (dot == std::string::npos) throw std::invalid_argument("sweep: expected run.<label>.<key>");
      const std::string label = key.substr(4, dot - 4);
      auto it = std::find_if(variant_keys.begin(), variant_keys.end(),
                             [&](const auto& p) { return p.first == label; });
      if (it == variant_keys.end()) {
        variant_keys.push_back({label, {}});
        it = std::prev(variant_keys.end());
      }
      it->second.emplace_back(key.substr(dot + 1), value);
    } else {
      const auto values = split_list(value);
      if (values.size() > 1) {
        RunConfig probe;
        for (const auto& v : values) apply_setting(probe, key, v);
        plan.axes.emplace_back(key, values);
      } else {
        apply_setting(base, key, value);
      }
    }
  }

  if (variant_keys.empty()) {
    plan.variants.emplace_back("base", base);
  } else {
    for (const auto& [label, settings] : variant_keys) {
      RunConfig c = base;
      for (const auto& [k, v] : settings) apply_setting(c, k, v);
      plan.variants.emplace_back(label, c);
    }
  }
  if (plan.seeds.empty()) plan.seeds.push_back(base.seed);
  if (plan.threads < 1) throw std::invalid_argument("sweep: threads must be >= 1");
  return plan;
}

SweepPlan parse_sweep_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("sweep: cannot open " + path);
  return parse_sweep(in);
}

std::vector<SweepCell> expand(const SweepPlan& plan) {
  if (plan.seeds.empty()) throw std::invalid_argument("sweep: need at least one seed");
  std::vector<SweepCell> cells;
  for (const auto& [label, base] : plan.variants) {
    std::vector<std::size_t> idx(plan.axes.size(), 0);
    while (true) {
      SweepCell cell;
      cell.label = label;
      RunConfig c = base;
      for (std::size_t a = 0; a < plan.axes.size(); ++a) {
        const auto& [key, values] = plan.axes[a];
        apply_setting(c, key, values[idx[a]]);
        cell.label += "/" + key + "=" + values[idx[a]];
      }
      for (auto seed : plan.seeds) {
        RunConfig r = c;
        r.seed = seed;
        r.cell.validate();
        cell.runs.push_back(r);
      }
      cells.push_back(std::move(cell));

      std::size_t a = 0;
      for (; a < idx.size(); ++a) {
        if (++idx[a] < plan.axes[a].second.size()) break;
        idx[a] = 0;
      }
      if (a == idx.size()) break;
    }
  }
  return cells;
}

SweepStats aggregate(const std::string& label, const std::vector<RunRecord>& records) {
  SweepStats s;
  s.label = label;
  s.runs = static_cast<int>(records.size());
  double total = 0.0;
  for (const auto& r : records) {
    if (r.diverged) ++s.diverged;
    if (r.converged && !r.diverged && r.iters_to_converge) {
      ++s.converged;
      total += *r.iters_to_converge;
    }
  }
  if (s.runs > 0) s.frac_conv = static_cast<double>(s.converged) / s.runs;
  if (s.converged > 0) s.avg_iters = total / s.converged;
  return s;
}

std::vector<SweepStats> run_sweep(const SweepPlan& plan, const SweepProgressFn& progress) {
  const std::vector<SweepCell> cells = expand(plan);
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t r = 0; r < cells[c].runs.size(); ++r) jobs.emplace_back(c, r);
  }
  if (!plan.out_dir.empty()) std::filesystem::create_directories(plan.out_dir);

  struct Result {
    std::size_t cell;
    std::size_t run;
    RunRecord record;
  };
  std::vector<Result> sink;
  std::mutex sink_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const auto [c, r] = jobs[j];
      RunConfig config = cells[c].runs[r];
      if (!plan.out_dir.empty()) {
        config.out_path = (std::filesystem::path(plan.out_dir) /
                           (sanitize(cells[c].label) + "_seed" + std::to_string(config.seed) + ".jsonl"))
                              .string();
      }
      RunRecord record;
      try {
        record = train_run(config);
      } catch (const std::exception& e) {
        record.config = config.canonical();
        record.config_hash = config.hash();
        record.seed = config.seed;
        record.diverged = true;
        record.fault = e.what();
      }
      std::lock_guard<std::mutex> lock(sink_mutex);
      if (progress) progress(cells[c].label, record);
      sink.push_back({c, r, std::move(record)});
    }
  };

  const int n_threads = std::max(1, std::min<int>(plan.threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<std::vector<RunRecord>> grouped(cells.size());
  std::sort(sink.begin(), sink.end(), [](const Result& a, const Result& b) {
    return a.cell != b.cell ? a.cell < b.cell : a.run < b.run;
  });
  for (auto& res : sink) grouped[res.cell].push_back(std::move(res.record));

  std::vector<SweepStats> stats;
  for (std::size_t c = 0; c < cells.size(); ++c) stats.push_back(aggregate(cells[c].label, grouped[c]));
  if (!plan.out_dir.empty()) {
    std::ofstream out(std::filesystem::path(plan.out_dir) / "summary.tsv");
    out << format_summary(stats);
  }
  return stats;
}

std::string format_summary(const std::vector<SweepStats>& stats) {
  std::ostringstream os;
  os << "label\truns\tfrac_conv\tavg_iters\tdiverged\n";
  for (const auto& s : stats) {
    os << s.label << '\t' << s.runs << '\t' << s.frac_conv << '\t';
    if (s.avg_iters) {
      os << *s.avg_iters;
    } else {
      os << '-';
    }
    os << '\t' << s.diverged << '\n';
  }
  return os.str();
}

}  // namespace cgrnn
