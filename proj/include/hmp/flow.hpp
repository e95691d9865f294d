#ifndef HMP_FLOW_HPP_
#define HMP_FLOW_HPP_

#include <optional>
#include <vector>

#include "hmp/chart.hpp"
#include "hmp/control.hpp"
#include "hmp/system.hpp"

namespace hmp {

struct IntegrateOptions {
  int steps = 1024;  // RK4 steps over the integrated span
  // Times at which the control is discontinuous; inserted into the step grid
  // so no RK4 step straddles a control jump.
  std::vector<double> control_breakpoints;
};

/// Fixed-step RK4 path of one discrete state's field under the given control.
SegmentPath integrate_segment(const ControlledField& field, const Vector& x0,
                              const ControlProvider& u, double t0, double t1,
                              const IntegrateOptions& opts = {});

SegmentPath integrate_segment(const ControlledField& field, const Vector& x0,
                              const ControlSignal& u, double t0, double t1,
                              const IntegrateOptions& opts = {});

struct EventOptions {
  double constraint_tol = 1e-10;    // |n(x)| at the located event
  double transversality_tol = 1e-6;  // scaled |<dN, f>| threshold
  double touch_tol = 1e-8;          // node-on-surface detection
};

struct SwitchEvent {
  double time = 0.0;
  Vector x_minus;
  double transversality = 0.0;  // <dN, f> at the crossing (unscaled)
};

/// Locates the first oriented crossing of the surface along the segment:
/// node scan for a sign change, then bisection with local re-integration and
/// a Newton polish down to |n(x)| < constraint_tol. A crossing (or touch)
/// with scaled |<dN, f>| below the threshold raises TransversalityError.
std::optional<SwitchEvent> detect_switch(const SegmentPath& seg,
                                         const ControlledField& field,
                                         const ControlProvider& u,
                                         const SwitchingSurface& surface,
                                         const EventOptions& opts = {});

struct SimulateOptions {
  int steps_per_segment = 1024;
  EventOptions event;
  std::vector<double> control_breakpoints;
};

/// Integrates the hybrid system through its scheduled surface sequence:
/// per-segment integration, event detection on the armed surface only, jump
/// application, then the final segment to tf. Throws IncompleteScheduleError
/// if a scheduled surface is not reached, TransversalityError on grazing.
HybridTrajectory simulate_hybrid(const HybridSystem& sys,
                                 const std::vector<ControlProvider>& controls,
                                 const Vector& x0, int q0, double t0, double tf,
                                 const SimulateOptions& opts = {});

HybridTrajectory simulate_hybrid(const HybridSystem& sys,
                                 const ControlSignal& u, const Vector& x0,
                                 int q0, double t0, double tf,
                                 const SimulateOptions& opts = {});

/// State at an arbitrary time, reconstructed by a short RK4 from the nearest
/// stored node (right-continuous at switching times).
Vector trajectory_eval(const HybridSystem& sys, const HybridTrajectory& traj,
                       const std::vector<ControlProvider>& controls, double t);

/// Transports a tangent vector along the stored path by integrating the
/// variational equation vdot = (df/dx) v from t1 (= v's time) to t2 >= t1.
Tangent pushforward(const SegmentPath& seg, const ControlledField& field,
                    const ControlProvider& u, const Tangent& v, double t1,
                    double t2);

/// Per-node transport of v (based at the segment start) across the segment.
std::vector<Vector> pushforward_path(const SegmentPath& seg,
                                     const ControlledField& field,
                                     const ControlProvider& u,
                                     const Vector& v0);

/// Transports a covector backward by integrating pdot = -(df/dx)^T p from
/// t2 (= p's time) down to t1 <= t2.
Cotangent pullback(const SegmentPath& seg, const ControlledField& field,
                   const ControlProvider& u, const Cotangent& p, double t2,
                   double t1);

/// Per-node backward transport of p based at the segment end.
std::vector<Vector> pullback_path(const SegmentPath& seg,
                                  const ControlledField& field,
                                  const ControlProvider& u, const Vector& pT);

/// Fundamental matrix of the variational equation from t1 to t2 (forward).
Matrix transport_matrix(const SegmentPath& seg, const ControlledField& field,
                        const ControlProvider& u, double t1, double t2);

/// Linearized flow transport along one segment, exposed as matrices.
class TransportOperator {
 public:
  TransportOperator(const SegmentPath& seg, const ControlledField& field,
                    ControlProvider u)
      : seg_(&seg), field_(&field), u_(std::move(u)) {}

  /// Matrix of the tangent transport from time t1 to time t2 (t1 <= t2).
  Matrix matrix(double t2, double t1) const;

 private:
  const SegmentPath* seg_;
  const ControlledField* field_;
  ControlProvider u_;
};

}  // namespace hmp

#endif  // HMP_FLOW_HPP_
