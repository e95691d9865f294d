#ifndef HMP_SOLVER_HPP_
#define HMP_SOLVER_HPP_

#include <optional>
#include <vector>

#include "hmp/adjoint.hpp"
#include "hmp/chart.hpp"
#include "hmp/control.hpp"
#include "hmp/system.hpp"

namespace hmp {

/// Minimum-energy steering result for one linear segment. The Gramian is
/// computed in the pulled-back form W = int_0^dt e^{-As} B B^T e^{-A^T s} ds,
/// which stays well conditioned for unstable modes over long spans; control
/// and costate are exposed as closed-form time functions:
///   u(t) = B^T e^{-A^T (t - t0)} eta,   p(t) = -e^{-A^T (t - t0)} eta.
struct LqSegment {
  Matrix A;
  Matrix B;
  double t0 = 0.0;
  double t1 = 0.0;
  Vector eta;
  double cost = 0.0;
  double gramian_condition = 0.0;

  Vector control_value(double t) const;
  Vector costate(double t) const;
  ControlProvider control() const;
  ControlSignal sampled_signal(int nodes) const;
};

struct LqOptions {
  double cond_limit = 1e12;
};

/// Steers x(t0) = a to x(t1) = b along xdot = A x + B u minimizing
/// (1/2) int |u|^2. Throws UncontrollableSegmentError when the Gramian
/// condition number exceeds the limit.
LqSegment lq_steer(const Matrix& A, const Matrix& B, const Vector& a,
                   const Vector& b, double t0, double t1,
                   const LqOptions& opts = {});

/// Decision variables of the switching-state optimizer: per switch, the free
/// surface parameters and the switching time.
struct SwitchDecision {
  std::vector<Vector> on_surface;  // per switch, dim = n-1
  std::vector<double> times;

  int switches() const { return int(times.size()); }
};

struct DecisionEval {
  double cost = 0.0;
  std::vector<LqSegment> segments;
};

struct SolverOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;
  double fd_step = 1e-5;
  double armijo_c = 1e-4;
  int max_halvings = 60;
  double min_time_gap = 1e-3;
  int resim_steps = 8192;
  int control_export_nodes = 513;
  double gramian_cond_limit = 1e12;
  int pmp_control_grid = 201;
  int pmp_time_samples = 200;
  // Newton polish on the analytic stationarity system (per-switch Hamiltonian
  // gaps and tangential costate mismatches). Backward covector transport
  // amplifies decision error exponentially on stiff segments, so the
  // finite-difference descent alone cannot reach the accuracy the adjoint
  // checks need.
  bool polish = true;
  double polish_tol = 1e-12;
  int polish_max_iter = 40;
  std::optional<SwitchDecision> initial;
  std::vector<SwitchDecision> extra_starts;
};

/// Chains minimum-energy segments through the decision's switching points:
/// x0 -> s1 -> (jump) -> s2 -> ... -> xf. Periodic surface parameters are
/// lifted to the representative nearest the previous segment's endpoint, so
/// the cost is continuous on the covering space of each surface circle.
DecisionEval evaluate_decision(const HybridSystem& sys,
                               const SwitchDecision& decision,
                               const Vector& x0, const Vector& xf, double t0,
                               double tf, const SolverOptions& opts = {});

/// Gradient of the decision cost from the closed-form segment costates:
/// d cost / d t_k is the Hamiltonian gap across switch k and
/// d cost / d w_k the tangential component of Tz^T p+ - p-. Requires every
/// surface to be axis-parametrized.
Vector analytic_decision_gradient(const HybridSystem& sys,
                                  const SwitchDecision& decision,
                                  const Vector& x0, const Vector& xf,
                                  double t0, double tf,
                                  const SolverOptions& opts = {});

/// One retraction step: surface parameters move along the in-surface
/// geodesic (plain parameter step with periodic wraparound for circle
/// coordinates), times move by plain subtraction and are clamped to keep the
/// ordering with the configured margin. Returns nullopt if the ordering
/// cannot be restored by clamping (step rejected).
std::optional<SwitchDecision> geodesic_step(const HybridSystem& sys,
                                            const SwitchDecision& decision,
                                            const Vector& gradient, double step,
                                            double t0, double tf,
                                            double min_time_gap = 1e-3);

struct IterationRecord {
  int iter = 0;
  double cost = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
};

struct SolverSolution {
  SwitchDecision decision;
  std::vector<LqSegment> lq_segments;
  std::vector<ControlSignal> controls;  // sampled per-segment signals
  double cost = 0.0;
  double resimulated_cost = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  std::vector<IterationRecord> iterations;
  HybridTrajectory trajectory;
  BolzaAdjoint adjoint;
  PMPReport pmp;
  Vector p_tf;  // terminal costate of the final steering segment
};

/// Finite-difference gradient descent (Armijo backtracking with a
/// Barzilai-Borwein trial step) over evaluate_decision, starting from the
/// default iterate (uniform times, zero surface parameters) unless
/// overridden. The returned solution carries the re-simulated trajectory,
/// the adjoint with its switch multipliers, and the minimum-condition report.
SolverSolution solve(const HybridSystem& sys, const Vector& x0,
                     const Vector& xf, double t0, double tf,
                     const SolverOptions& opts = {});

}  // namespace hmp

#endif  // HMP_SOLVER_HPP_
