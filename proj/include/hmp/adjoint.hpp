#ifndef HMP_ADJOINT_HPP_
#define HMP_ADJOINT_HPP_

#include <optional>
#include <vector>

#include "hmp/chart.hpp"
#include "hmp/control.hpp"
#include "hmp/flow.hpp"
#include "hmp/system.hpp"

namespace hmp {

/// Differential of the terminal cost at the final state.
Cotangent terminal_covector(const TerminalCost& h, const ChartPoint& x_tf);

/// Control Hamiltonian H(p, x, u) = <p, f_q(x, u)>. On a Mayer-lifted system
/// with the accumulator covector pinned to 1 this evaluates to
/// <p, f> + l(x, u).
double hamiltonian(const HybridSystem& sys, int q, const Vector& x,
                   const Vector& p, const Vector& u);

struct AdjointJump {
  Cotangent p_minus;
  double mu = 0.0;
  double hamiltonian_mismatch = 0.0;  // <p-, f0-> - <p+, f1+>, ~0 by construction
};

/// Covector jump across a switching surface, processed backward in time:
///   mu      = <p+, f1+ - Tz f0-> / <dN, f0->
///   p(ts-)  = Tz^T p(ts) + mu dN
/// which enforces Hamiltonian continuity <p-, f0-> = <p+, f1+> identically.
/// Throws TransversalityError when <dN, f0-> is below the scaled threshold.
AdjointJump adjoint_switch_jump(const Cotangent& p_plus, const JumpMap& jump,
                                const Cotangent& dN, const Tangent& f0_minus,
                                const Tangent& f1_plus,
                                double transversality_tol = 1e-6);

/// Covector path along a hybrid trajectory. Grids match the state segments
/// node for node.
struct AdjointTrajectory {
  std::vector<std::vector<double>> times;       // per segment
  std::vector<std::vector<Vector>> covectors;   // per segment, per node
  std::vector<std::vector<double>> hamiltonians;
  std::vector<double> mus;                      // per switch
  std::vector<double> switch_hamiltonian_gaps;  // |H- - H+| per switch
  Vector p_tf;

  const Vector& covector_at_start() const { return covectors.front().front(); }
};

/// Constructs the adjoint along a Mayer trajectory: p(tf) = dh(x(tf)) (or the
/// supplied terminal covector for steering problems), pullback transport
/// within segments, adjoint_switch_jump across switches processed backward.
AdjointTrajectory backward_adjoint(
    const HybridSystem& sys, const HybridTrajectory& traj,
    const std::vector<ControlProvider>& controls,
    const std::optional<Vector>& p_tf_override = std::nullopt);

/// Extends the trajectory with the running-cost accumulator coordinate (the
/// x part is kept node for node; the accumulator is integrated over the
/// stored grid).
HybridTrajectory lift_trajectory(const HybridSystem& sys,
                                 const HybridSystem& lifted,
                                 const HybridTrajectory& traj,
                                 const std::vector<ControlProvider>& controls);

/// Lifted system + trajectory + adjoint for a Bolza problem (the only path
/// by which running costs enter the adjoint machinery).
struct BolzaAdjoint {
  HybridSystem lifted;
  HybridTrajectory lifted_traj;
  AdjointTrajectory adjoint;
};

BolzaAdjoint backward_adjoint_bolza(
    const HybridSystem& sys, const HybridTrajectory& traj,
    const std::vector<ControlProvider>& controls,
    const std::optional<Vector>& p_tf_override = std::nullopt);

/// Bolza cost of a stored trajectory (accumulated running cost + terminal).
double hybrid_cost(const HybridSystem& sys, const HybridTrajectory& traj,
                   const std::vector<ControlProvider>& controls);

struct PmpOptions {
  int control_grid = 201;  // grid points per control axis
  int time_samples = 200;
};

struct PmpSample {
  double t = 0.0;
  int segment = 0;
  double gap = 0.0;  // H(u(t)) - min over the control grid
};

struct PMPReport {
  double max_min_violation = 0.0;
  std::vector<double> switch_hamiltonian_gaps;
  std::vector<PmpSample> samples;
};

/// Samples the minimum condition H(x, p, u(t)) <= H(x, p, u1) over a control
/// grid (with one quadratic refinement around the grid minimizer) and reports
/// the largest violation together with the per-switch Hamiltonian gaps.
PMPReport check_pmp(const HybridSystem& sys, const HybridTrajectory& traj,
                    const AdjointTrajectory& adj,
                    const PmpOptions& opts = {});

/// Residual of p(ts-) - Tz^T p(ts) off span{dN}, relative to its norm.
double switch_jump_direction_residual(const HybridSystem& sys,
                                      const HybridTrajectory& traj,
                                      const AdjointTrajectory& adj, int k);

}  // namespace hmp

#endif  // HMP_ADJOINT_HPP_
