#ifndef HMP_SYSTEM_HPP_
#define HMP_SYSTEM_HPP_

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hmp/chart.hpp"
#include "hmp/control.hpp"
#include "hmp/manifold.hpp"

namespace hmp {

/// Linear-in-chart realization xdot = A x + B u, kept alongside the generic
/// callables so the steering solver can recognize its problem class.
struct LinearDynamics {
  Matrix A;
  Matrix B;
};

/// Controlled vector field of one discrete state.
struct ControlledField {
  int control_dim = 0;
  std::function<Vector(const Vector&, const Vector&)> eval;
  std::function<Matrix(const Vector&, const Vector&)> jac_x;  // empty -> FD
  std::optional<LinearDynamics> linear;

  Vector operator()(const Vector& x, const Vector& u) const { return eval(x, u); }
  Matrix jacobian_x(const Vector& x, const Vector& u) const;
};

ControlledField linear_field(const Matrix& A, const Matrix& B);

/// State jump applied when a switching surface is crossed.
struct JumpMap {
  std::function<Vector(const Vector&)> eval;
  std::function<Matrix(const Vector&)> jac;  // empty -> FD

  Vector operator()(const Vector& x) const { return eval(x); }
  Matrix jacobian(const Vector& x) const;

  static JumpMap identity();
  static JumpMap affine(const Matrix& M, const Vector& c);
};

/// Running cost of one discrete state.
struct Loss {
  std::function<double(const Vector&, const Vector&)> eval;
  std::function<Vector(const Vector&, const Vector&)> grad_x;  // empty -> FD
  bool is_quadratic_control = false;  // marks l(x, u) = |u|^2 / 2

  double operator()(const Vector& x, const Vector& u) const { return eval(x, u); }
  Vector gradient_x(const Vector& x, const Vector& u) const;
};

Loss quadratic_control_loss();

struct TerminalCost {
  std::function<double(const Vector&)> eval;
  std::function<Vector(const Vector&)> grad;  // empty -> FD

  double operator()(const Vector& x) const { return eval(x); }
  Vector gradient(const Vector& x) const;

  static TerminalCost zero(int dim);
};

/// The hybrid system data: discrete states with their controlled fields, the
/// ordered switching-surface schedule with per-surface jumps, the admissible
/// control box, and the Bolza cost pieces.
struct HybridSystem {
  ManifoldPtr manifold;
  std::vector<std::string> states;
  std::vector<ControlledField> fields;       // one per state
  std::vector<SwitchingSurface> surfaces;    // ordered event schedule
  std::vector<JumpMap> jumps;                // one per surface
  std::vector<std::array<double, 2>> control_bounds;
  std::vector<std::optional<Loss>> losses;   // one per state; nullopt = Mayer
  TerminalCost terminal_cost;

  int dim() const { return manifold->dimension(); }
  int control_dim() const;
  int state_index(const std::string& id) const;
  bool has_losses() const;
  const Loss* loss(int state) const;

  void check_consistent() const;
};

/// Dense state path of one inter-switch interval.
struct SegmentPath {
  int state_index = 0;
  std::string state_id;
  std::vector<double> times;
  std::vector<Vector> points;    // chart coordinates per node
  std::vector<Vector> controls;  // control value per node

  double t_begin() const { return times.front(); }
  double t_end() const { return times.back(); }
  int nodes() const { return int(times.size()); }
};

/// Hybrid trajectory (switching times, discrete-state sequence, per-segment
/// dense paths). boundary_times = [t0, s_1, ..., s_L, tf].
struct HybridTrajectory {
  std::vector<double> boundary_times;
  std::vector<int> state_sequence;
  std::vector<SegmentPath> segments;
  // per switch: state just before the jump and just after it
  std::vector<std::pair<Vector, Vector>> jump_pairs;

  int switch_count() const { return int(jump_pairs.size()); }
  double t0() const { return boundary_times.front(); }
  double tf() const { return boundary_times.back(); }
  double switch_time(int k) const { return boundary_times[size_t(k) + 1]; }
  const Vector& final_state() const { return segments.back().points.back(); }

  /// Checks x(t_s) = jump(x(t_s-)) at every switch within tol.
  void check_jump_consistency(const HybridSystem& sys, double tol = 1e-10) const;
};

/// Appends the running-cost accumulator coordinate: dynamics gain
/// xdot_{n+1} = l_q(x, u), surfaces become cylinders, jumps act as the
/// identity on the new coordinate, the terminal cost becomes
/// x_{n+1} + h(x), and losses are zeroed.
HybridSystem mayer_lift(const HybridSystem& sys);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Report-only check of the standing assumptions: initial state off every
/// surface, nonzero surface gradients, positive-definite metric samples.
ValidationReport validate(const HybridSystem& sys, const ChartPoint& x0,
                          int q0);

}  // namespace hmp

#endif  // HMP_SYSTEM_HPP_
