#include "cgrnn/tasks.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cgrnn {

static_assert(std::endian::native == std::endian::little, "batch dumps assume little-endian");

TaskBatch gen_memory(const MemorySpec& spec, Index batch, std::mt19937_64& rng) {
  if (spec.T < 1 || spec.n < 1) throw std::invalid_argument("gen_memory: T and n must be >= 1");
  const int length = spec.length();
  TaskBatch out;
  out.kind = TaskKind::memory;
  out.inputs.assign(static_cast<std::size_t>(length),
                    Matrix::Zero(MemorySpec::kInputSymbols, batch));
  out.targets.labels.assign(static_cast<std::size_t>(length),
                            std::vector<int>(static_cast<std::size_t>(batch), MemorySpec::kBlank));
  out.mask = Matrix::Ones(length, batch);

  std::uniform_int_distribution<int> symbol(0, MemorySpec::kDataSymbols - 1);
  for (Index b = 0; b < batch; ++b) {
    const auto col = static_cast<std::size_t>(b);
    for (int t = 0; t < length; ++t) {
      int s = MemorySpec::kBlank;
      if (t < spec.n) {
        s = symbol(rng);
        out.targets.labels[static_cast<std::size_t>(spec.T + spec.n + t)][col] = s;
      } else if (t == spec.delimiter_position()) {
        s = MemorySpec::kDelimiter;
      }
      out.inputs[static_cast<std::size_t>(t)](s, b) = 1.0;
    }
  }
  return out;
}

TaskBatch gen_adding(const AddingSpec& spec, Index batch, std::mt19937_64& rng) {
  if (spec.T < 2) throw std::invalid_argument("gen_adding: T must be >= 2");
  const int half = spec.T / 2;
  TaskBatch out;
  out.kind = TaskKind::adding;
  out.inputs.assign(static_cast<std::size_t>(spec.T), Matrix::Zero(AddingSpec::kInputs, batch));
  out.targets.values = Vector::Zero(batch);
  out.mask = Matrix::Zero(spec.T, batch);
  out.mask.row(spec.T - 1).setOnes();

  std::uniform_real_distribution<double> value(0.0, 1.0);
  std::uniform_int_distribution<int> first(0, half - 1);
  std::uniform_int_distribution<int> second(half, spec.T - 1);
  for (Index b = 0; b < batch; ++b) {
    for (int t = 0; t < spec.T; ++t) out.inputs[static_cast<std::size_t>(t)](0, b) = value(rng);
    const int i = first(rng);
    const int j = second(rng);
    out.inputs[static_cast<std::size_t>(i)](1, b) = 1.0;
    out.inputs[static_cast<std::size_t>(j)](1, b) = 1.0;
    out.targets.values(b) = out.inputs[static_cast<std::size_t>(i)](0, b) +
                            out.inputs[static_cast<std::size_t>(j)](0, b);
  }
  return out;
}

double baseline_loss_analytic(TaskKind kind, const MemorySpec& memory) {
  if (kind == TaskKind::adding) return 1.0 / 6.0;
  return memory.n * std::log(static_cast<double>(MemorySpec::kDataSymbols)) / memory.length();
}

BaselineEstimate baseline_loss(TaskKind kind, const MemorySpec& memory, std::mt19937_64& rng,
                               Index sequences) {
  if (kind == TaskKind::adding) return {1.0 / 6.0, 0.0};
  if (sequences < 2) throw std::invalid_argument("baseline_loss: need at least 2 sequences");
  const double log_k = std::log(static_cast<double>(MemorySpec::kDataSymbols));
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Index s = 0; s < sequences; ++s) {
    const TaskBatch seq = gen_memory(memory, 1, rng);
    bool seen_delimiter = false;
    double loss = 0.0;
    for (Index t = 0; t < seq.steps(); ++t) {
      if (seq.inputs[static_cast<std::size_t>(t)](MemorySpec::kDelimiter, 0) > 0.0) {
        seen_delimiter = true;
      }
      const int label = seq.targets.labels[static_cast<std::size_t>(t)][0];
      const bool after = seen_delimiter && seq.inputs[static_cast<std::size_t>(t)](
                                               MemorySpec::kDelimiter, 0) == 0.0;
      // Certain blank before and on the delimiter, uniform over data symbols after it.
      if (after) {
        loss += label == MemorySpec::kBlank ? INFINITY : log_k;
      } else {
        loss += label == MemorySpec::kBlank ? 0.0 : INFINITY;
      }
    }
    loss /= static_cast<double>(seq.steps());
    sum += loss;
    sum_sq += loss * loss;
  }
  const double n = static_cast<double>(sequences);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

namespace {

constexpr char kMagic[4] = {'C', 'G', 'T', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("read_batch: truncated input");
  return v;
}

void put_tensor(std::ostream& out, const std::vector<std::uint64_t>& dims,
                const std::vector<double>& data) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
}

std::vector<double> get_tensor(std::istream& in, std::vector<std::uint64_t>& dims) {
  const auto rank = get<std::uint32_t>(in);
  if (rank > 8) throw std::runtime_error("read_batch: implausible tensor rank");
  dims.resize(rank);
  std::uint64_t count = 1;
  for (auto& d : dims) {
    d = get<std::uint64_t>(in);
    count *= d;
  }
  std::vector<double> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("read_batch: truncated tensor data");
  return data;
}

}  // namespace

void write_batch(std::ostream& out, const TaskBatch& batch) {
  const auto steps = static_cast<std::uint64_t>(batch.steps());
  const auto n = static_cast<std::uint64_t>(batch.batch());
  const auto features = static_cast<std::uint64_t>(batch.features());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, batch.kind == TaskKind::memory ? 0U : 1U);

  std::vector<double> inputs;
  inputs.reserve(steps * n * features);
  for (const auto& x : batch.inputs) {
    for (Index b = 0; b < x.cols(); ++b) {
      for (Index f = 0; f < x.rows(); ++f) inputs.push_back(x(f, b));
    }
  }
  put_tensor(out, {steps, n, features}, inputs);

  std::vector<double> targets(steps * n, 0.0);
  if (batch.kind == TaskKind::memory) {
    for (std::uint64_t t = 0; t < steps; ++t) {
      for (std::uint64_t b = 0; b < n; ++b) targets[t * n + b] = batch.targets.labels[t][b];
    }
  } else if (steps > 0) {
    for (std::uint64_t b = 0; b < n; ++b) {
      targets[(steps - 1) * n + b] = batch.targets.values(static_cast<Index>(b));
    }
  }
  put_tensor(out, {steps, n}, targets);

  std::vector<double> mask(steps * n);
  for (std::uint64_t t = 0; t < steps; ++t) {
    for (std::uint64_t b = 0; b < n; ++b) {
      mask[t * n + b] = batch.mask(static_cast<Index>(t), static_cast<Index>(b));
    }
  }
  put_tensor(out, {steps, n}, mask);
  if (!out) throw std::runtime_error("write_batch: stream error");
}

TaskBatch read_batch(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("read_batch: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("read_batch: unsupported version");
  TaskBatch batch;
  batch.kind = get<std::uint32_t>(in) == 0U ? TaskKind::memory : TaskKind::adding;

  std::vector<std::uint64_t> dims;
  const auto inputs = get_tensor(in, dims);
  if (dims.size() != 3) throw std::runtime_error("read_batch: inputs must have rank 3");
  const auto steps = dims[0];
  const auto n = dims[1];
  const auto features = dims[2];
  batch.inputs.assign(steps, Matrix(static_cast<Index>(features), static_cast<Index>(n)));
  for (std::uint64_t t = 0; t < steps; ++t) {
    for (std::uint64_t b = 0; b < n; ++b) {
      for (std::uint64_t f = 0; f < features; ++f) {
        batch.inputs[t](static_cast<Index>(f), static_cast<Index>(b)) =
            inputs[(t * n + b) * features + f];
      }
    }
  }

  const auto targets = get_tensor(in, dims);
  if (dims.size() != 2 || dims[0] != steps || dims[1] != n) {
    throw std::runtime_error("read_batch: targets shape mismatch");
  }
  if (batch.kind == TaskKind::memory) {
    batch.targets.labels.assign(steps, std::vector<int>(n));
    for (std::uint64_t t = 0; t < steps; ++t) {
      for (std::uint64_t b = 0; b < n; ++b) {
        batch.targets.labels[t][b] = static_cast<int>(targets[t * n + b]);
      }
    }
  } else {
    batch.targets.values = Vector::Zero(static_cast<Index>(n));
    if (steps > 0) {
      for (std::uint64_t b = 0; b < n; ++b) {
        batch.targets.values(static_cast<Index>(b)) = targets[(steps - 1) * n + b];
      }
    }
  }

  const auto mask = get_tensor(in, dims);
  if (dims.size() != 2 || dims[0] != steps || dims[1] != n) {
    throw std::runtime_error("read_batch: mask shape mismatch");
  }
  batch.mask = Matrix(static_cast<Index>(steps), static_cast<Index>(n));
  for (std::uint64_t t = 0; t < steps; ++t) {
    for (std::uint64_t b = 0; b < n; ++b) {
      batch.mask(static_cast<Index>(t), static_cast<Index>(b)) = mask[t * n + b];
    }
  }
  return batch;
}

void write_batch_file(const std::string& path, const TaskBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_batch_file: cannot open " + path);
  write_batch(out, batch);
}

TaskBatch read_batch_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_batch_file: cannot open " + path);
  return read_batch(in);
}

std::mt19937_64 split_rng(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the pair keeps streams decorrelated.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return std::mt19937_64(mix(mix(seed) ^ (stream * 0xd1b54a32d192ed03ULL)));
}

}  // namespace cgrnn
