#include "cgrnn/fused.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cgrnn {

namespace {

using Array = Eigen::ArrayXXd;

// exp(-x) overflowing to inf still yields the correct limit 0.
Matrix sigmoid_of(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

// Sequence-sized buffers survive between calls so training does not fault
// in fresh pages every iteration.
struct Workspace {
  Matrix H, U, AG, C, F, GR, GZ, R, INV, ACT, DC, DAG, dHout;
};

thread_local Workspace workspace;

// Real views of the weights. A complex state matrix becomes its 2n x 2n block
// embedding acting on the stacked state [re; im]; input matrices and biases
// stack as [re; im].
Matrix embed_state(const Parameter& p) { return p.is_complex ? block_embed(p.value) : p.value.re(); }

Matrix embed_rows(const Parameter& p) {
  if (!p.is_complex) return p.value.re();
  Matrix out(2 * p.value.rows(), p.value.cols());
  out.topRows(p.value.rows()) = p.value.re();
  out.bottomRows(p.value.rows()) = p.value.im();
  return out;
}

ComplexMatrix state_grad(const Matrix& d, bool complex) {
  if (!complex) return ComplexMatrix::from_real(d);
  const Index n = d.rows() / 2;
  Matrix re = d.topLeftCorner(n, n) + d.bottomRightCorner(n, n);
  Matrix im = d.bottomLeftCorner(n, n) - d.topRightCorner(n, n);
  return {std::move(re), std::move(im)};
}

ComplexMatrix rows_grad(const Matrix& d, bool complex) {
  if (!complex) return ComplexMatrix::from_real(d);
  const Index n = d.rows() / 2;
  return {d.topRows(n), d.bottomRows(n)};
}

Matrix vstack(const std::vector<Matrix>& parts) {
  Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Matrix out(rows, parts.front().cols());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}

struct Coeffs {
  double alpha = 0.5;
  double beta = 0.5;
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

// Gate value from its pre-activation channels; zi is empty for one-channel gates.
Matrix gate_value(GateKind kind, const Matrix& zr, const Matrix& zi, const Coeffs& c) {
  switch (kind) {
    case GateKind::product:
      return sigmoid_of(zr).cwiseProduct(sigmoid_of(zi));
    case GateKind::tied1:
      return c.alpha * sigmoid_of(zr) + (1.0 - c.alpha) * sigmoid_of(zi);
    case GateKind::tied2:
      return sigmoid_of(c.alpha * zr + (1.0 - c.alpha) * zi);
    case GateKind::free:
      return sigmoid_of(c.alpha * zr + c.beta * zi);
    case GateKind::real_sigmoid:
      return sigmoid_of(zr);
  }
  throw std::invalid_argument("fused: unknown gate kind");
}

// dzi aliases dzr for one-channel gates and is then left untouched.
void gate_backward(GateKind kind, const Matrix& zr, const Matrix& zi,
                   const Eigen::Ref<const Matrix>& g, const Matrix& dg, Coeffs& c,
                   Eigen::Ref<Matrix> dzr, Eigen::Ref<Matrix> dzi) {
  switch (kind) {
    case GateKind::product: {
      const Array sr = sigmoid_of(zr).array();
      const Array si = sigmoid_of(zi).array();
      dzr = (dg.array() * si * sr * (1.0 - sr)).matrix();
      dzi = (dg.array() * sr * si * (1.0 - si)).matrix();
      return;
    }
    case GateKind::tied1: {
      const Array sr = sigmoid_of(zr).array();
      const Array si = sigmoid_of(zi).array();
      dzr = (c.alpha * dg.array() * sr * (1.0 - sr)).matrix();
      dzi = ((1.0 - c.alpha) * dg.array() * si * (1.0 - si)).matrix();
      c.d_alpha += (dg.array() * (sr - si)).sum();
      return;
    }
    case GateKind::tied2: {
      const Array dm = dg.array() * g.array() * (1.0 - g.array());
      dzr = (c.alpha * dm).matrix();
      dzi = ((1.0 - c.alpha) * dm).matrix();
      c.d_alpha += (dm * (zr.array() - zi.array())).sum();
      return;
    }
    case GateKind::free: {
      const Array dm = dg.array() * g.array() * (1.0 - g.array());
      dzr = (c.alpha * dm).matrix();
      dzi = (c.beta * dm).matrix();
      c.d_alpha += (dm * zr.array()).sum();
      c.d_beta += (dm * zi.array()).sum();
      return;
    }
    case GateKind::real_sigmoid:
      dzr = (dg.array() * g.array() * (1.0 - g.array())).matrix();
      return;
  }
}

struct Layout {
  bool complex = true;
  int channels = 2;       // state channels: 2 for [re; im], 1 for real states
  int gate_channels = 0;  // pre-activation channels per gate, 0 when gateless
  GateKind gate = GateKind::free;
  bool tanh_candidate = false;
};

Layout layout_for(const CellConfig& cfg) {
  Layout l;
  switch (cfg.kind) {
    case CellKind::basic_complex:
    case CellKind::urnn:
      break;
    case CellKind::cgrnn:
      l.gate_channels = 2;
      l.gate = cfg.gate;
      break;
    case CellKind::gru_real:
      l.complex = false;
      l.channels = 1;
      l.gate_channels = 1;
      l.gate = GateKind::real_sigmoid;
      l.tanh_candidate = true;
      break;
    case CellKind::free_real:
      l.complex = false;
      l.channels = 1;
      l.gate_channels = 2;
      l.gate = cfg.gate;
      break;
  }
  return l;
}

// Names of the gate state matrices, input matrices and biases in the row
// order of the stacked gate pre-activations.
std::vector<std::string> gate_names(CellKind kind, char what) {
  const std::string w(1, what);
  if (kind == CellKind::free_real) {
    return {w + "_r1", w + "_r2", w + "_z1", w + "_z2"};
  }
  return {w + "_r", w + "_z"};
}

}  // namespace

LossAndGrad fused_loss_and_grad(const CellConfig& cfg, const ParameterSet& params,
                                const TaskBatch& batch) {
  cfg.validate();
  const Layout lay = layout_for(cfg);
  const Index n = cfg.n_h;
  const Index nx = cfg.n_x;
  const Index T = batch.steps();
  const Index B = batch.batch();
  if (T < 1) throw ShapeError("fused_loss_and_grad: empty batch");
  if (batch.features() != nx) {
    throw ShapeError("fused_loss_and_grad: batch has " + std::to_string(batch.features()) +
                     " features, cell expects " + std::to_string(nx));
  }
  const Index cn = lay.channels * n;
  // Step inputs are augmented as [state; x; 1] so one product applies the
  // state matrix, input matrix and bias together.
  const Index ca = cn + nx + 1;
  const Index TB = T * B;
  const bool gated = lay.gate_channels > 0;
  const Index gn = gated ? 2 * lay.gate_channels * n : 0;
  const bool complex_gates = cfg.kind == CellKind::cgrnn;

  auto augment = [&](const Matrix& e, const Matrix& v, const Matrix& b) {
    Matrix out(e.rows(), ca);
    out << e, v, b;
    return out;
  };
  const Matrix Wc = augment(embed_state(params.at("W")), embed_rows(params.at("V")),
                            embed_rows(params.at("b")));
  Matrix Wg;
  if (gated) {
    std::vector<Matrix> ws, vs, bs;
    for (const auto& name : gate_names(cfg.kind, 'W')) ws.push_back(embed_state(params.at(name)));
    for (const auto& name : gate_names(cfg.kind, 'V')) vs.push_back(embed_rows(params.at(name)));
    for (const auto& name : gate_names(cfg.kind, 'b')) bs.push_back(embed_rows(params.at(name)));
    Wg = augment(vstack(ws), vstack(vs), vstack(bs));
  }
  const Matrix& Wo = params.at("W_o").value.re();
  const Matrix& bo = params.at("b_o").value.re();
  const bool modrelu = !lay.tanh_candidate && cfg.nonlin == NonlinKind::modrelu;
  Eigen::ArrayXd mb;
  if (modrelu) mb = params.at("modrelu_b").value.re().col(0).array();
  const double inv_m2 = 1.0 / (cfg.hirose_m * cfg.hirose_m);

  const int n_coeff = gated ? gate_coefficient_count(lay.gate) : 0;
  const bool learn = cfg.learnable_gate_coeffs && n_coeff > 0;
  Coeffs coeff[2];
  const char* gname[2] = {"r", "z"};
  for (int k = 0; k < 2 && learn; ++k) {
    coeff[k].alpha = sigmoid(params.at(std::string("alpha_") + gname[k]).value.re()(0, 0));
    if (n_coeff >= 2) {
      coeff[k].beta = sigmoid(params.at(std::string("beta_") + gname[k]).value.re()(0, 0));
    }
  }

  Workspace& w = workspace;
  Matrix& H = w.H;
  H.resize(ca, (T + 1) * B);
  H.block(0, 0, cn, B).setZero();
  for (Index t = 0; t < T; ++t) H.block(cn, t * B, nx, B) = batch.inputs[static_cast<std::size_t>(t)];
  H.block(cn, T * B, nx, B).setZero();
  H.row(ca - 1).setOnes();
  Matrix& U = w.U;
  Matrix& AG = w.AG;
  Matrix& GR = w.GR;
  Matrix& GZ = w.GZ;
  if (gated) {
    U.resize(ca, TB);
    U.bottomRows(nx + 1) = H.bottomRows(nx + 1).leftCols(TB);
    AG.resize(gn, TB);
    GR.resize(n, TB);
    GZ.resize(n, TB);
  }
  Matrix& C = w.C;
  Matrix& F = w.F;
  C.resize(cn, TB);
  F.resize(cn, TB);
  Matrix& R = w.R;
  Matrix& INV = w.INV;
  Matrix& ACT = w.ACT;
  if (!lay.tanh_candidate) {
    R.resize(n, TB);
    INV.resize(n, TB);
    ACT.resize(n, TB);
  }

  auto gate_rows = [&](Index t, int gate, int ch) {
    return AG.block((gate * lay.gate_channels + ch) * n, t * B, n, B);
  };
  const Matrix no_channel;

  for (Index t = 0; t < T; ++t) {
    const auto Sx = H.middleCols(t * B, B);
    const auto S = Sx.topRows(cn);
    auto Ct = C.middleCols(t * B, B);
    if (gated) {
      AG.middleCols(t * B, B).noalias() = Wg * Sx;
      for (int k = 0; k < 2; ++k) {
        const Matrix zr = gate_rows(t, k, 0);
        const Matrix zi = lay.gate_channels == 2 ? Matrix(gate_rows(t, k, 1)) : no_channel;
        (k == 0 ? GR : GZ).middleCols(t * B, B) = gate_value(lay.gate, zr, zi, coeff[k]);
      }
      const auto gr = GR.middleCols(t * B, B);
      for (int ch = 0; ch < lay.channels; ++ch) {
        U.block(ch * n, t * B, n, B) = S.middleRows(ch * n, n).cwiseProduct(gr);
      }
      Ct.noalias() = Wc * U.middleCols(t * B, B);
    } else {
      Ct.noalias() = Wc * Sx;
    }

    auto Ft = F.middleCols(t * B, B);
    if (lay.tanh_candidate) {
      Ft = Ct.array().tanh().matrix();
    } else {
      auto r = R.middleCols(t * B, B).array();
      auto inv = INV.middleCols(t * B, B).array();
      auto act = ACT.middleCols(t * B, B).array();
      if (lay.channels == 2) {
        r = (Ct.topRows(n).array().square() + Ct.bottomRows(n).array().square()).sqrt();
      } else {
        r = Ct.array().abs();
      }
      inv = 1.0 / (r + kModulusEpsilon);
      if (modrelu) {
        act = (r.colwise() + mb).max(0.0);
      } else {
        act = (r * inv_m2).tanh();
      }
      const Array scale = act * inv;
      for (int ch = 0; ch < lay.channels; ++ch) {
        Ft.middleRows(ch * n, n) = (scale * Ct.middleRows(ch * n, n).array()).matrix();
      }
    }

    auto Snext = H.block(0, (t + 1) * B, cn, B);
    if (gated) {
      const auto gz = GZ.middleCols(t * B, B).array();
      for (int ch = 0; ch < lay.channels; ++ch) {
        Snext.middleRows(ch * n, n) =
            (S.middleRows(ch * n, n).array() +
             gz * (Ft.middleRows(ch * n, n).array() - S.middleRows(ch * n, n).array()))
                .matrix();
      }
    } else {
      Snext = Ft;
    }
  }

  // Loss and its gradient with respect to the outputs.
  LossAndGrad result;
  Matrix dWo, dbo;
  Matrix& dHout = w.dHout;  // gradient reaching each post-step state from the outputs
  const auto states = H.topRows(cn);
  if (batch.kind == TaskKind::memory) {
    Matrix Y = Wo * states.rightCols(TB);
    Y.colwise() += bo.col(0);
    Matrix dY = Matrix::Zero(Y.rows(), TB);
    double total = 0.0;
    std::size_t count = 0;
    for (Index t = 0; t < T; ++t) {
      for (Index b = 0; b < B; ++b) {
        const int label =
            batch.targets.labels[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)];
        if (label < 0) continue;
        if (label >= Y.rows()) {
          throw std::out_of_range("fused_loss_and_grad: class index " + std::to_string(label) +
                                  " out of range");
        }
        const Index col = t * B + b;
        const double peak = Y.col(col).maxCoeff();
        const Eigen::ArrayXd shifted = Y.col(col).array() - peak;
        const double log_norm = std::log(shifted.exp().sum());
        dY.col(col) = (shifted - log_norm).exp().matrix();
        dY(label, col) -= 1.0;
        total -= shifted(label) - log_norm;
        ++count;
      }
    }
    const double scale = count == 0 ? 0.0 : 1.0 / static_cast<double>(count);
    result.loss = total * scale;
    dY *= scale;
    dWo = dY * states.rightCols(TB).transpose();
    dbo = dY * Eigen::VectorXd::Ones(TB);
    dHout.resize(cn, TB);
    dHout.noalias() = Wo.transpose() * dY;
  } else {
    if (Wo.rows() != 1) throw ShapeError("fused_loss_and_grad: adding needs one output");
    Matrix y = Wo * states.rightCols(B);
    y.colwise() += bo.col(0);
    const Matrix diff = y - batch.targets.values.transpose();
    result.loss = diff.squaredNorm() / static_cast<double>(B);
    const Matrix dy = diff * (2.0 / static_cast<double>(B));
    dWo = dy * states.rightCols(B).transpose();
    dbo = dy.rowwise().sum();
    dHout.resize(cn, B);
    dHout.noalias() = Wo.transpose() * dy;
  }

  // Backward through time. Weight gradients are accumulated in chunks of
  // steps while the chunk's columns are still in cache.
  Matrix& DC = w.DC;
  DC.resize(cn, TB);
  Matrix& DAG = w.DAG;
  if (gated) DAG.resize(gn, TB);
  Matrix dWc = Matrix::Zero(cn, ca);
  Matrix dWg = gated ? Matrix::Zero(gn, ca) : Matrix();
  Eigen::ArrayXd dmb = modrelu ? Eigen::ArrayXd::Zero(n) : Eigen::ArrayXd();
  const Index chunk = std::max<Index>(1, 512 / B);
  const auto Wc_state = Wc.leftCols(cn);
  const auto Wg_state = gated ? Wg.leftCols(cn) : Wg.leftCols(0);
  Matrix dS = Matrix::Zero(cn, B);
  Matrix dprev(cn, B);
  Matrix dF(cn, B);
  Matrix dU(cn, B);
  Matrix dgr(n, B);
  Matrix dgz(n, B);
  for (Index t = T; t-- > 0;) {
    if (batch.kind == TaskKind::memory) {
      dS += dHout.middleCols(t * B, B);
    } else if (t == T - 1) {
      dS += dHout;
    }
    const auto S = H.block(0, t * B, cn, B);
    const auto Ft = F.middleCols(t * B, B);
    const auto Ct = C.middleCols(t * B, B);

    if (gated) {
      const auto gz = GZ.middleCols(t * B, B).array();
      dgz.setZero();
      for (int ch = 0; ch < lay.channels; ++ch) {
        const auto dSc = dS.middleRows(ch * n, n).array();
        const auto Sc = S.middleRows(ch * n, n).array();
        dF.middleRows(ch * n, n) = (gz * dSc).matrix();
        dgz.array() += dSc * (Ft.middleRows(ch * n, n).array() - Sc);
        dprev.middleRows(ch * n, n) = (dSc - gz * dSc).matrix();
      }
      const Matrix zr = gate_rows(t, 1, 0);
      const Matrix zi = lay.gate_channels == 2 ? Matrix(gate_rows(t, 1, 1)) : no_channel;
      auto dzr = DAG.block(lay.gate_channels * n, t * B, n, B);
      auto dzi = DAG.block((2 * lay.gate_channels - 1) * n, t * B, n, B);
      gate_backward(lay.gate, zr, zi, GZ.middleCols(t * B, B), dgz, coeff[1], dzr, dzi);
    } else {
      dF = dS;
    }

    auto dC = DC.middleCols(t * B, B);
    if (lay.tanh_candidate) {
      dC = (dF.array() * (1.0 - Ft.array().square())).matrix();
    } else {
      const auto r = R.middleCols(t * B, B).array();
      const auto inv = INV.middleCols(t * B, B).array();
      const auto act = ACT.middleCols(t * B, B).array();
      Array ds = dF.topRows(n).array() * Ct.topRows(n).array();
      if (lay.channels == 2) ds += dF.bottomRows(n).array() * Ct.bottomRows(n).array();
      Array dr;
      if (modrelu) {
        const Array drelu = (act > 0.0).select(ds * inv, 0.0);
        dmb += drelu.rowwise().sum();
        dr = drelu - ds * act * inv.square();
      } else {
        dr = ds * inv * ((1.0 - act.square()) * inv_m2 - act * inv);
      }
      const Array radial = (r > 0.0).select(dr / r, 0.0);
      const Array scale = act * inv;
      for (int ch = 0; ch < lay.channels; ++ch) {
        dC.middleRows(ch * n, n) =
            (scale * dF.middleRows(ch * n, n).array() + radial * Ct.middleRows(ch * n, n).array())
                .matrix();
      }
    }

    dU.noalias() = Wc_state.transpose() * dC;
    if (gated) {
      const auto gr = GR.middleCols(t * B, B);
      dgr.setZero();
      for (int ch = 0; ch < lay.channels; ++ch) {
        dgr.array() += dU.middleRows(ch * n, n).array() * S.middleRows(ch * n, n).array();
        dprev.middleRows(ch * n, n).array() += gr.array() * dU.middleRows(ch * n, n).array();
      }
      const Matrix zr = gate_rows(t, 0, 0);
      const Matrix zi = lay.gate_channels == 2 ? Matrix(gate_rows(t, 0, 1)) : no_channel;
      auto dzr = DAG.block(0, t * B, n, B);
      auto dzi = DAG.block((lay.gate_channels - 1) * n, t * B, n, B);
      gate_backward(lay.gate, zr, zi, GR.middleCols(t * B, B), dgr, coeff[0], dzr, dzi);
      if (t > 0) dprev.noalias() += Wg_state.transpose() * DAG.middleCols(t * B, B);
    } else {
      dprev = dU;
    }
    dS.swap(dprev);

    if (t % chunk == 0) {
      const Index cols = (std::min(T, t + chunk) - t) * B;
      const Index c0 = t * B;
      dWc.noalias() += DC.middleCols(c0, cols) * (gated ? U : H).middleCols(c0, cols).transpose();
      if (gated) dWg.noalias() += DAG.middleCols(c0, cols) * H.middleCols(c0, cols).transpose();
    }
  }

  result.grads.reserve(params.size());
  for (const auto& p : params.items()) {
    result.grads.push_back(ComplexMatrix(p.value.rows(), p.value.cols()));
  }
  auto set = [&](const std::string& name, ComplexMatrix g) {
    result.grads[params.index_of(name)] = std::move(g);
  };
  set("W", state_grad(dWc.leftCols(cn), lay.complex));
  set("V", rows_grad(dWc.middleCols(cn, nx), lay.complex));
  set("b", rows_grad(dWc.rightCols(1), lay.complex));
  if (gated) {
    const Index block = complex_gates ? 2 * n : n;
    const auto wn = gate_names(cfg.kind, 'W');
    const auto vn = gate_names(cfg.kind, 'V');
    const auto bn = gate_names(cfg.kind, 'b');
    for (std::size_t k = 0; k < wn.size(); ++k) {
      const auto rows = dWg.middleRows(static_cast<Index>(k) * block, block);
      set(wn[k], state_grad(rows.leftCols(cn), complex_gates));
      set(vn[k], rows_grad(rows.middleCols(cn, nx), complex_gates));
      set(bn[k], rows_grad(rows.rightCols(1), complex_gates));
    }
    for (int k = 0; k < 2 && learn; ++k) {
      const double a = coeff[k].alpha;
      set(std::string("alpha_") + gname[k],
          ComplexMatrix::from_real(Matrix::Constant(1, 1, coeff[k].d_alpha * a * (1.0 - a))));
      if (n_coeff >= 2) {
        const double b = coeff[k].beta;
        set(std::string("beta_") + gname[k],
            ComplexMatrix::from_real(Matrix::Constant(1, 1, coeff[k].d_beta * b * (1.0 - b))));
      }
    }
  }
  if (modrelu) set("modrelu_b", ComplexMatrix::from_real(dmb.matrix()));
  set("W_o", ComplexMatrix::from_real(dWo));
  set("b_o", ComplexMatrix::from_real(dbo));

  if (!std::isfinite(result.loss)) throw NumericalError("fused_loss_and_grad: non-finite loss");
  for (std::size_t i = 0; i < result.grads.size(); ++i) {
    if (!result.grads[i].all_finite()) {
      throw NumericalError("fused_loss_and_grad: non-finite gradient for " +
                           params.items()[i].name);
    }
  }
  return result;
}

}  // namespace cgrnn
