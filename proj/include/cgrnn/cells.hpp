#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cgrnn/activations.hpp"
#include "cgrnn/complex_ops.hpp"
#include "cgrnn/params.hpp"

namespace cgrnn {

/**
 * basic_complex and urnn share the gateless dynamics h = f(W h + V x + b);
 * urnn always starts from a unitary W while basic_complex starts from a
 * Glorot W unless the Stiefel constraint is on. gru_real and free_real keep a
 * real state.
 */
enum class CellKind { basic_complex, urnn, cgrnn, gru_real, free_real };

enum class TaskKind { memory, adding };

enum class UnitaryInit { component_product, qr_random };

std::string to_string(CellKind kind);
std::string to_string(TaskKind kind);
std::string to_string(UnitaryInit scheme);
/// Accepts both CLI spellings (basic, gru, free-real) and enum names.
CellKind parse_cell_kind(const std::string& s);
TaskKind parse_task_kind(const std::string& s);
UnitaryInit parse_unitary_init(const std::string& s);

bool is_complex_cell(CellKind kind);
bool is_gated_cell(CellKind kind);

struct CellConfig {
  CellKind kind = CellKind::cgrnn;
  int n_x = 1;
  int n_h = 1;
  int n_o = 1;
  NonlinKind nonlin = NonlinKind::modrelu;
  double hirose_m = 1.0;
  GateKind gate = GateKind::free;
  /// Mixing coefficients are sigmoid-reparameterized leaves when set,
  /// constants 0.5 otherwise.
  bool learnable_gate_coeffs = true;
  /// Keep the candidate state matrix W unitary (orthogonal for free_real).
  bool stiefel = true;
  /// Also constrain the gate state matrices W_r, W_z.
  bool stiefel_gates = false;

  /// Throws std::invalid_argument on out-of-range sizes.
  void validate() const;
};

inline constexpr double kGateBiasInit = 4.0;

/// Initial parameters for a cell and its output head.
ParameterSet init_params(const CellConfig& config, UnitaryInit scheme, std::mt19937_64& rng);

/// Gate values forced into a step, replacing the computed gates.
struct GateOverride {
  std::optional<Matrix> reset;
  std::optional<Matrix> update;
};

/**
 * A cell's parameters bound onto a tape as leaves (trainable) or constants.
 * States are CNodes; real-state cells carry an invalid imaginary channel.
 */
class CellGraph {
 public:
  CellGraph(ad::Tape& tape, const CellConfig& config, const ParameterSet& params,
            bool trainable = true);
  /// Uses caller-provided nodes, parallel to params.items(), as the parameters.
  CellGraph(ad::Tape& tape, const CellConfig& config, const ParameterSet& params,
            std::vector<ad::CNode> leaves);

  ad::Tape& tape() { return *tape_; }
  const CellConfig& config() const { return config_; }

  ad::CNode initial_state(Index batch);
  ad::CNode input(const Matrix& x);
  ad::CNode step(ad::CNode h_prev, ad::CNode x, const GateOverride* gates = nullptr);
  /// Real output W_o [Re h; Im h] + b_o (W_o h + b_o for real states).
  ad::NodeId output(ad::CNode h);

  /// Leaf handles in ParameterSet order; complex blocks use both channels.
  const std::vector<ad::CNode>& leaves() const { return leaves_; }

 private:
  ad::CNode c(const std::string& name) const;
  ad::NodeId r(const std::string& name) const;
  ad::CNode affine(const std::string& w, const std::string& v, const std::string& b, ad::CNode h,
                   ad::CNode x);
  ad::CNode activate(ad::CNode z);
  ad::NodeId gate(const std::string& suffix, ad::CNode pre);
  ad::NodeId forced(const Matrix& g);
  void bind_gate_coefficients();

  ad::CNode basic_step(ad::CNode h, ad::CNode x);
  ad::CNode cgrnn_step(ad::CNode h, ad::CNode x, const GateOverride* gates);
  ad::CNode gru_step(ad::CNode h, ad::CNode x, const GateOverride* gates);
  ad::CNode free_real_step(ad::CNode h, ad::CNode x, const GateOverride* gates);

  ad::Tape* tape_;
  CellConfig config_;
  const ParameterSet* params_;
  std::vector<ad::CNode> leaves_;
  ad::NodeId alpha_r_, beta_r_, alpha_z_, beta_z_;
};

// Value-level single steps; each evaluates the corresponding tape graph on
// constants. `x` holds one column per batch element.
ComplexMatrix basic_step(const CellConfig& config, const ParameterSet& params,
                         const ComplexMatrix& h_prev, const Matrix& x);
ComplexMatrix cgrnn_step(const CellConfig& config, const ParameterSet& params,
                         const ComplexMatrix& h_prev, const Matrix& x,
                         const GateOverride& gates = {});
Matrix gru_step(const CellConfig& config, const ParameterSet& params, const Matrix& h_prev,
                const Matrix& x, const GateOverride& gates = {});
Matrix free_real_step(const CellConfig& config, const ParameterSet& params, const Matrix& h_prev,
                      const Matrix& x, const GateOverride& gates = {});
/// W_o [Re h; Im h] + b_o. Throws ShapeError unless W_o has 2 n_h columns.
Matrix output_map(const ComplexMatrix& h, const Matrix& w_o, const Vector& b_o);

/// Per-step targets. Memory: class index per (step, sample). Adding: one
/// regression target per sample, scored at the final step.
struct SequenceTargets {
  std::vector<std::vector<int>> labels;
  Vector values;
};

/**
 * Memory: mean softmax cross-entropy over all steps and samples of
 * `outputs` (classes x batch per step). Adding: mean squared error of the
 * final step's first output row. Throws std::out_of_range for a bad class.
 */
double sequence_loss(const std::vector<Matrix>& outputs, const SequenceTargets& targets,
                     TaskKind kind);
ad::NodeId sequence_loss(ad::Tape& tape, const std::vector<ad::NodeId>& outputs,
                         const SequenceTargets& targets, TaskKind kind);

}  // namespace cgrnn
