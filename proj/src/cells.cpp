#include "cgrnn/cells.hpp"

#include <cmath>
#include <stdexcept>

#include "cgrnn/manifold_opt.hpp"

namespace cgrnn {

using ad::CNode;
using ad::NodeId;

std::string to_string(CellKind kind) {
  switch (kind) {
    case CellKind::basic_complex: return "basic";
    case CellKind::urnn: return "urnn";
    case CellKind::cgrnn: return "cgrnn";
    case CellKind::gru_real: return "gru";
    case CellKind::free_real: return "free-real";
  }
  return "unknown";
}

std::string to_string(TaskKind kind) { return kind == TaskKind::memory ? "memory" : "adding"; }

std::string to_string(UnitaryInit scheme) {
  return scheme == UnitaryInit::component_product ? "component-product" : "qr";
}

CellKind parse_cell_kind(const std::string& s) {
  if (s == "basic" || s == "basic_complex") return CellKind::basic_complex;
  if (s == "urnn") return CellKind::urnn;
  if (s == "cgrnn") return CellKind::cgrnn;
  if (s == "gru" || s == "gru_real") return CellKind::gru_real;
  if (s == "free-real" || s == "free_real") return CellKind::free_real;
  throw std::invalid_argument("unknown cell kind '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "memory") return TaskKind::memory;
  if (s == "adding") return TaskKind::adding;
  throw std::invalid_argument("unknown task '" + s + "'");
}

UnitaryInit parse_unitary_init(const std::string& s) {
  if (s == "component-product" || s == "component_product") return UnitaryInit::component_product;
  if (s == "qr" || s == "qr_random") return UnitaryInit::qr_random;
  throw std::invalid_argument("unknown unitary init '" + s + "'");
}

bool is_complex_cell(CellKind kind) {
  return kind == CellKind::basic_complex || kind == CellKind::urnn || kind == CellKind::cgrnn;
}

bool is_gated_cell(CellKind kind) {
  return kind == CellKind::cgrnn || kind == CellKind::gru_real || kind == CellKind::free_real;
}

void CellConfig::validate() const {
  if (n_x < 1 || n_h < 1 || n_o < 1) {
    throw std::invalid_argument("CellConfig: n_x, n_h and n_o must be at least 1");
  }
  if (nonlin == NonlinKind::hirose && !(hirose_m > 0.0)) {
    throw std::invalid_argument("CellConfig: hirose m must be positive");
  }
}

namespace {

Parameter complex_param(std::string name, ComplexMatrix v, Constraint c = Constraint::none) {
  return {std::move(name), std::move(v), true, c};
}

Parameter real_param(std::string name, Matrix v, Constraint c = Constraint::none) {
  return {std::move(name), ComplexMatrix::from_real(std::move(v)), false, c};
}

ComplexMatrix complex_glorot(Index n_in, Index n_out, std::mt19937_64& rng) {
  Matrix re = glorot_uniform(n_in, n_out, rng);
  Matrix im = glorot_uniform(n_in, n_out, rng);
  return {std::move(re), std::move(im)};
}

ComplexMatrix gate_bias(Index n) {
  return {Matrix::Constant(n, 1, kGateBiasInit), Matrix::Constant(n, 1, kGateBiasInit)};
}

void add_gate_coefficients(ParameterSet& ps, const CellConfig& cfg) {
  if (!cfg.learnable_gate_coeffs) return;
  const int count = gate_coefficient_count(cfg.gate);
  for (const char* g : {"r", "z"}) {
    if (count >= 1) ps.add(real_param(std::string("alpha_") + g, Matrix::Zero(1, 1)));
    if (count >= 2) ps.add(real_param(std::string("beta_") + g, Matrix::Zero(1, 1)));
  }
}

}  // namespace

ParameterSet init_params(const CellConfig& cfg, UnitaryInit scheme, std::mt19937_64& rng) {
  cfg.validate();
  const Index nh = cfg.n_h;
  const Index nx = cfg.n_x;
  const Constraint w_constraint = cfg.stiefel ? Constraint::stiefel : Constraint::none;
  const Constraint gate_constraint = cfg.stiefel_gates ? Constraint::stiefel : Constraint::none;
  ParameterSet ps;

  if (is_complex_cell(cfg.kind)) {
    const bool unitary_w = cfg.kind != CellKind::basic_complex || cfg.stiefel;
    ps.add(complex_param("W", unitary_w ? unitary_init(nh, scheme, rng) : complex_glorot(nh, nh, rng),
                         w_constraint));
    ps.add(complex_param("V", complex_glorot(nx, nh, rng)));
    ps.add(complex_param("b", ComplexMatrix(nh, 1)));
    if (cfg.kind == CellKind::cgrnn) {
      for (const char* g : {"r", "z"}) {
        const std::string s(g);
        ps.add(complex_param("W_" + s,
                             cfg.stiefel_gates ? unitary_init(nh, scheme, rng)
                                               : complex_glorot(nh, nh, rng),
                             gate_constraint));
        ps.add(complex_param("V_" + s, complex_glorot(nx, nh, rng)));
        ps.add(complex_param("b_" + s, gate_bias(nh)));
      }
      add_gate_coefficients(ps, cfg);
    }
    if (cfg.nonlin == NonlinKind::modrelu) ps.add(real_param("modrelu_b", Matrix::Zero(nh, 1)));
    ps.add(real_param("W_o", glorot_uniform(2 * nh, cfg.n_o, rng)));
    ps.add(real_param("b_o", Matrix::Zero(cfg.n_o, 1)));
    return ps;
  }

  if (cfg.kind == CellKind::gru_real) {
    for (const char* g : {"z", "r"}) {
      const std::string s(g);
      ps.add(real_param("W_" + s, glorot_uniform(nh, nh, rng)));
      ps.add(real_param("V_" + s, glorot_uniform(nx, nh, rng)));
      ps.add(real_param("b_" + s, Matrix::Constant(nh, 1, kGateBiasInit)));
    }
    ps.add(real_param("W", glorot_uniform(nh, nh, rng)));
    ps.add(real_param("V", glorot_uniform(nx, nh, rng)));
    ps.add(real_param("b", Matrix::Zero(nh, 1)));
    ps.add(real_param("W_o", glorot_uniform(nh, cfg.n_o, rng)));
    ps.add(real_param("b_o", Matrix::Zero(cfg.n_o, 1)));
    return ps;
  }

  // free_real
  ps.add(real_param("W", orthogonal_init(nh, rng), w_constraint));
  ps.add(real_param("V", glorot_uniform(nx, nh, rng)));
  ps.add(real_param("b", Matrix::Zero(nh, 1)));
  for (const char* g : {"r", "z"}) {
    for (const char* stream : {"1", "2"}) {
      const std::string s = std::string(g) + stream;
      ps.add(real_param("W_" + s, cfg.stiefel_gates ? orthogonal_init(nh, rng)
                                                    : glorot_uniform(nh, nh, rng),
                        gate_constraint));
      ps.add(real_param("V_" + s, glorot_uniform(nx, nh, rng)));
      ps.add(real_param("b_" + s, Matrix::Constant(nh, 1, kGateBiasInit)));
    }
  }
  add_gate_coefficients(ps, cfg);
  if (cfg.nonlin == NonlinKind::modrelu) ps.add(real_param("modrelu_b", Matrix::Zero(nh, 1)));
  ps.add(real_param("W_o", glorot_uniform(nh, cfg.n_o, rng)));
  ps.add(real_param("b_o", Matrix::Zero(cfg.n_o, 1)));
  return ps;
}

CellGraph::CellGraph(ad::Tape& tape, const CellConfig& config, const ParameterSet& params,
                     bool trainable)
    : tape_(&tape), config_(config), params_(&params) {
  config_.validate();
  leaves_.reserve(params.size());
  for (const auto& p : params.items()) {
    if (p.is_complex) {
      leaves_.push_back(trainable ? ad::cparameter(tape, p.value) : ad::cconstant(tape, p.value));
    } else {
      leaves_.push_back(ad::creal(trainable ? tape.parameter(p.value.re())
                                            : tape.constant(p.value.re())));
    }
  }
  bind_gate_coefficients();
}

CellGraph::CellGraph(ad::Tape& tape, const CellConfig& config, const ParameterSet& params,
                     std::vector<CNode> leaves)
    : tape_(&tape), config_(config), params_(&params), leaves_(std::move(leaves)) {
  config_.validate();
  if (leaves_.size() != params.size()) {
    throw ShapeError("CellGraph: " + std::to_string(leaves_.size()) + " leaves for " +
                     std::to_string(params.size()) + " parameters");
  }
  bind_gate_coefficients();
}

void CellGraph::bind_gate_coefficients() {
  if (config_.kind != CellKind::cgrnn && config_.kind != CellKind::free_real) return;
  ad::Tape& tape = *tape_;
  const int count = gate_coefficient_count(config_.gate);
  auto coefficient = [&](const std::string& name) {
    if (config_.learnable_gate_coeffs) return tape.sigmoid(r(name));
    return tape.constant(Matrix::Constant(1, 1, 0.5));
  };
  if (count >= 1) {
    alpha_r_ = coefficient("alpha_r");
    alpha_z_ = coefficient("alpha_z");
  }
  if (count >= 2) {
    beta_r_ = coefficient("beta_r");
    beta_z_ = coefficient("beta_z");
  }
}

CNode CellGraph::c(const std::string& name) const { return leaves_[params_->index_of(name)]; }
NodeId CellGraph::r(const std::string& name) const { return c(name).re; }

CNode CellGraph::initial_state(Index batch) {
  const Matrix zero = Matrix::Zero(config_.n_h, batch);
  if (is_complex_cell(config_.kind)) return {tape_->constant(zero), tape_->constant(zero)};
  return ad::creal(tape_->constant(zero));
}

CNode CellGraph::input(const Matrix& x) {
  if (x.rows() != config_.n_x) {
    throw ShapeError("CellGraph::input: expected " + std::to_string(config_.n_x) +
                     " input rows, got " + shape_string(x));
  }
  return ad::creal(tape_->constant(x));
}

CNode CellGraph::affine(const std::string& w, const std::string& v, const std::string& b, CNode h,
                        CNode x) {
  ad::Tape& t = *tape_;
  return ad::cadd(t, ad::cadd(t, ad::cmatmul(t, c(w), h), ad::cmatmul(t, c(v), x)), c(b));
}

CNode CellGraph::activate(CNode z) {
  if (config_.nonlin == NonlinKind::hirose) return ad::hirose(*tape_, z, config_.hirose_m);
  return ad::modrelu(*tape_, z, r("modrelu_b"));
}

NodeId CellGraph::gate(const std::string& suffix, CNode pre) {
  const bool reset = suffix == "r";
  return ad::gate_forward(*tape_, config_.gate, pre, reset ? alpha_r_ : alpha_z_,
                          reset ? beta_r_ : beta_z_);
}

NodeId CellGraph::forced(const Matrix& g) {
  if (g.rows() != config_.n_h) {
    throw ShapeError("GateOverride: expected " + std::to_string(config_.n_h) + " rows, got " +
                     shape_string(g));
  }
  return tape_->constant(g);
}

CNode CellGraph::step(CNode h_prev, CNode x, const GateOverride* gates) {
  const Matrix& hv = tape_->value(h_prev.re);
  const Matrix& xv = tape_->value(x.re);
  if (hv.rows() != config_.n_h || xv.rows() != config_.n_x || hv.cols() != xv.cols()) {
    throw ShapeError("step: state " + shape_string(hv) + " and input " + shape_string(xv) +
                     " do not match n_h=" + std::to_string(config_.n_h) +
                     ", n_x=" + std::to_string(config_.n_x));
  }
  switch (config_.kind) {
    case CellKind::basic_complex:
    case CellKind::urnn: return basic_step(h_prev, x);
    case CellKind::cgrnn: return cgrnn_step(h_prev, x, gates);
    case CellKind::gru_real: return gru_step(h_prev, x, gates);
    case CellKind::free_real: return free_real_step(h_prev, x, gates);
  }
  throw std::invalid_argument("step: unknown cell kind");
}

CNode CellGraph::basic_step(CNode h, CNode x) { return activate(affine("W", "V", "b", h, x)); }

namespace {

NodeId one_minus(ad::Tape& t, NodeId g) { return t.add_scalar(t.scale(g, -1.0), 1.0); }

// g f + (1 - g) h
CNode interpolate(ad::Tape& t, NodeId g, CNode f, CNode h) {
  return ad::cadd(t, ad::real_scale(t, g, f), ad::real_scale(t, one_minus(t, g), h));
}

}  // namespace

CNode CellGraph::cgrnn_step(CNode h, CNode x, const GateOverride* gates) {
  ad::Tape& t = *tape_;
  const NodeId g_r = gates && gates->reset ? forced(*gates->reset)
                                           : gate("r", affine("W_r", "V_r", "b_r", h, x));
  const NodeId g_z = gates && gates->update ? forced(*gates->update)
                                            : gate("z", affine("W_z", "V_z", "b_z", h, x));
  const CNode candidate = activate(affine("W", "V", "b", ad::real_scale(t, g_r, h), x));
  return interpolate(t, g_z, candidate, h);
}

CNode CellGraph::gru_step(CNode h, CNode x, const GateOverride* gates) {
  ad::Tape& t = *tape_;
  const NodeId g_z = gates && gates->update ? forced(*gates->update)
                                            : t.sigmoid(affine("W_z", "V_z", "b_z", h, x).re);
  const NodeId g_r = gates && gates->reset ? forced(*gates->reset)
                                           : t.sigmoid(affine("W_r", "V_r", "b_r", h, x).re);
  const NodeId candidate = t.tanh(affine("W", "V", "b", ad::real_scale(t, g_r, h), x).re);
  return interpolate(t, g_z, ad::creal(candidate), h);
}

CNode CellGraph::free_real_step(CNode h, CNode x, const GateOverride* gates) {
  ad::Tape& t = *tape_;
  auto two_stream_gate = [&](const std::string& g) {
    const NodeId z1 = affine("W_" + g + "1", "V_" + g + "1", "b_" + g + "1", h, x).re;
    const NodeId z2 = affine("W_" + g + "2", "V_" + g + "2", "b_" + g + "2", h, x).re;
    return gate(g, CNode{z1, z2});
  };
  const NodeId g_r = gates && gates->reset ? forced(*gates->reset) : two_stream_gate("r");
  const NodeId g_z = gates && gates->update ? forced(*gates->update) : two_stream_gate("z");
  const CNode candidate = activate(affine("W", "V", "b", ad::real_scale(t, g_r, h), x));
  return interpolate(t, g_z, candidate, h);
}

NodeId CellGraph::output(CNode h) {
  ad::Tape& t = *tape_;
  const NodeId features = is_complex_cell(config_.kind) ? ad::stack_channels(t, h) : h.re;
  return t.add(t.matmul(r("W_o"), features), r("b_o"));
}

namespace {

void require_kind(const CellConfig& cfg, std::initializer_list<CellKind> kinds, const char* op) {
  for (CellKind k : kinds) {
    if (cfg.kind == k) return;
  }
  throw std::invalid_argument(std::string(op) + ": cell kind " + to_string(cfg.kind) +
                              " not supported");
}

}  // namespace

ComplexMatrix basic_step(const CellConfig& config, const ParameterSet& params,
                         const ComplexMatrix& h_prev, const Matrix& x) {
  require_kind(config, {CellKind::basic_complex, CellKind::urnn}, "basic_step");
  ad::Tape tape;
  CellGraph g(tape, config, params, false);
  return ad::cvalue(tape, g.step(ad::cconstant(tape, h_prev), g.input(x)));
}

ComplexMatrix cgrnn_step(const CellConfig& config, const ParameterSet& params,
                         const ComplexMatrix& h_prev, const Matrix& x, const GateOverride& gates) {
  require_kind(config, {CellKind::cgrnn}, "cgrnn_step");
  ad::Tape tape;
  CellGraph g(tape, config, params, false);
  return ad::cvalue(tape, g.step(ad::cconstant(tape, h_prev), g.input(x), &gates));
}

Matrix gru_step(const CellConfig& config, const ParameterSet& params, const Matrix& h_prev,
                const Matrix& x, const GateOverride& gates) {
  require_kind(config, {CellKind::gru_real}, "gru_step");
  ad::Tape tape;
  CellGraph g(tape, config, params, false);
  return tape.value(g.step(ad::creal(tape.constant(h_prev)), g.input(x), &gates).re);
}

Matrix free_real_step(const CellConfig& config, const ParameterSet& params, const Matrix& h_prev,
                      const Matrix& x, const GateOverride& gates) {
  require_kind(config, {CellKind::free_real}, "free_real_step");
  ad::Tape tape;
  CellGraph g(tape, config, params, false);
  return tape.value(g.step(ad::creal(tape.constant(h_prev)), g.input(x), &gates).re);
}

Matrix output_map(const ComplexMatrix& h, const Matrix& w_o, const Vector& b_o) {
  if (w_o.cols() != 2 * h.rows() || b_o.size() != w_o.rows()) {
    throw ShapeError("output_map: W_o " + shape_string(w_o) + ", b_o of length " +
                     std::to_string(b_o.size()) + " for state " + h.shape());
  }
  Matrix out = w_o.leftCols(h.rows()) * h.re() + w_o.rightCols(h.rows()) * h.im();
  out.colwise() += b_o;
  return out;
}

double sequence_loss(const std::vector<Matrix>& outputs, const SequenceTargets& targets,
                     TaskKind kind) {
  if (outputs.empty()) throw ShapeError("sequence_loss: no outputs");
  if (kind == TaskKind::adding) {
    const Matrix& last = outputs.back();
    if (last.cols() != targets.values.size()) {
      throw ShapeError("sequence_loss: output " + shape_string(last) + " for " +
                       std::to_string(targets.values.size()) + " targets");
    }
    return (last.row(0).transpose() - targets.values).squaredNorm() /
           static_cast<double>(last.cols());
  }
  if (targets.labels.size() != outputs.size()) {
    throw ShapeError("sequence_loss: " + std::to_string(outputs.size()) + " outputs for " +
                     std::to_string(targets.labels.size()) + " label steps");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const Matrix& z = outputs[t];
    for (Index j = 0; j < z.cols(); ++j) {
      const int label = targets.labels[t][static_cast<std::size_t>(j)];
      if (label < 0) continue;
      if (label >= z.rows()) {
        throw std::out_of_range("sequence_loss: class index " + std::to_string(label) +
                                " outside [0, " + std::to_string(z.rows()) + ")");
      }
      const double peak = z.col(j).maxCoeff();
      const double lse = peak + std::log((z.col(j).array() - peak).exp().sum());
      total += lse - z(label, j);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

NodeId sequence_loss(ad::Tape& tape, const std::vector<NodeId>& outputs,
                     const SequenceTargets& targets, TaskKind kind) {
  if (outputs.empty()) throw ShapeError("sequence_loss: no outputs");
  if (kind == TaskKind::adding) {
    const Matrix& last = tape.value(outputs.back());
    if (last.rows() != 1 || last.cols() != targets.values.size()) {
      throw ShapeError("sequence_loss: output " + shape_string(last) + " for " +
                       std::to_string(targets.values.size()) + " targets");
    }
    const NodeId diff = tape.sub(outputs.back(), tape.constant(targets.values.transpose()));
    return tape.scale(tape.sum(tape.square(diff)), 1.0 / static_cast<double>(last.cols()));
  }
  if (targets.labels.size() != outputs.size()) {
    throw ShapeError("sequence_loss: " + std::to_string(outputs.size()) + " outputs for " +
                     std::to_string(targets.labels.size()) + " label steps");
  }
  NodeId total;
  std::size_t count = 0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    for (int label : targets.labels[t]) count += label >= 0 ? 1 : 0;
    const NodeId step = tape.softmax_cross_entropy(outputs[t], targets.labels[t]);
    total = total.valid() ? tape.add(total, step) : step;
  }
  return tape.scale(total, count == 0 ? 0.0 : 1.0 / static_cast<double>(count));
}

}  // namespace cgrnn
