#include "hmp/flow.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

namespace {

// Controls are piecewise constant from the left, so a step whose right
// endpoint sits on a control breakpoint must not sample the next piece.
double right_stage_time(double t, double h) { return t + h * (1.0 - 1e-9); }

// One classical RK4 step of xdot = f(x, u(t)) over [t, t + h].
Vector rk4_step(const ControlledField& field, const Vector& x,
                const ControlProvider& u, double t, double h) {
  Vector k1 = field(x, u(t));
  Vector k2 = field(x + 0.5 * h * k1, u(t + 0.5 * h));
  Vector k3 = field(x + 0.5 * h * k2, u(t + 0.5 * h));
  Vector k4 = field(x + h * k3, u(right_stage_time(t, h)));
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrates from (t0, x0) to t1 with at least `min_substeps` RK4 steps.
Vector rk4_span(const ControlledField& field, const Vector& x0,
                const ControlProvider& u, double t0, double t1,
                int min_substeps) {
  if (t1 == t0) return x0;
  int n = std::max(1, min_substeps);
  double h = (t1 - t0) / n;
  Vector x = x0;
  for (int i = 0; i < n; ++i) x = rk4_step(field, x, u, t0 + i * h, h);
  return x;
}

std::vector<double> build_grid(double t0, double t1, int steps,
                               const std::vector<double>& breakpoints) {
  std::vector<double> grid;
  grid.reserve(size_t(steps) + breakpoints.size() + 2);
  for (int i = 0; i <= steps; ++i) {
    grid.push_back(t0 + (t1 - t0) * double(i) / double(steps));
  }
  for (double b : breakpoints) {
    if (b > t0 && b < t1) grid.push_back(b);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [t0, t1](double a, double b) {
                           return std::abs(a - b) < 1e-13 * (1.0 + t1 - t0);
                         }),
             grid.end());
  grid.front() = t0;
  grid.back() = t1;
  return grid;
}

// Index of the last node with time <= t.
size_t node_before(const std::vector<double>& times, double t) {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  return size_t(it - times.begin()) - 1;
}

// Linear interpolation of the stored path inside one node interval.
Vector interp_state(const SegmentPath& seg, size_t i, double t) {
  if (i + 1 >= seg.points.size()) return seg.points.back();
  double a = seg.times[i], b = seg.times[i + 1];
  double w = (b > a) ? (t - a) / (b - a) : 0.0;
  return (1.0 - w) * seg.points[i] + w * seg.points[i + 1];
}

double scaled_transversality(const Vector& grad, const Vector& f) {
  double denom = grad.norm() * f.norm();
  if (denom < 1e-300) return 0.0;
  return grad.dot(f) / denom;
}

}  // namespace

SegmentPath integrate_segment(const ControlledField& field, const Vector& x0,
                              const ControlProvider& u, double t0, double t1,
                              const IntegrateOptions& opts) {
  if (!(t1 > t0)) throw Error("integrate_segment: empty span");
  std::vector<double> grid =
      build_grid(t0, t1, opts.steps, opts.control_breakpoints);

  SegmentPath seg;
  seg.times = grid;
  seg.points.reserve(grid.size());
  seg.controls.reserve(grid.size());
  Vector x = x0;
  seg.points.push_back(x);
  seg.controls.push_back(u(t0));
  for (size_t i = 0; i + 1 < grid.size(); ++i) {
    double h = grid[i + 1] - grid[i];
    x = rk4_step(field, x, u, grid[i], h);
    if (!x.allFinite()) {
      std::ostringstream msg;
      msg << "state blew up during integration at t=" << grid[i + 1];
      throw BlowUpError(msg.str(), grid[i]);
    }
    seg.points.push_back(x);
    seg.controls.push_back(u(grid[i + 1]));
  }
  return seg;
}

SegmentPath integrate_segment(const ControlledField& field, const Vector& x0,
                              const ControlSignal& u, double t0, double t1,
                              const IntegrateOptions& opts) {
  IntegrateOptions merged = opts;
  for (double b : u.grid()) merged.control_breakpoints.push_back(b);
  return integrate_segment(field, x0, u.provider(), t0, t1, merged);
}

std::optional<SwitchEvent> detect_switch(const SegmentPath& seg,
                                         const ControlledField& field,
                                         const ControlProvider& u,
                                         const SwitchingSurface& surface,
                                         const EventOptions& opts) {
  const double orient = surface.orientation >= 0.0 ? 1.0 : -1.0;
  const size_t n = seg.times.size();
  std::vector<double> s(n);
  for (size_t i = 0; i < n; ++i) {
    s[i] = orient * surface.value(seg.points[i]);
  }

  auto check_transversal = [&](double t, const Vector& x) -> double {
    Vector grad = surface.gradient_at(x);
    if (grad.norm() <= 1e-10) {
      throw DegenerateSurfaceError("zero constraint gradient on surface '" +
                                   surface.id + "'");
    }
    Vector f = field(x, u(t));
    double scaled = scaled_transversality(grad, f);
    if (std::abs(scaled) < opts.transversality_tol) {
      std::ostringstream msg;
      msg << "non-transversal intersection with surface '" << surface.id
          << "' at t=" << t << " (scaled <dN,f> = " << scaled << ")";
      throw TransversalityError(msg.str(), t);
    }
    return grad.dot(f);
  };

  for (size_t i = 0; i + 1 < n; ++i) {
    // A node sitting on the surface with no usable crossing speed means the
    // trajectory grazes; it is not continued.
    if (std::abs(s[i]) <= opts.touch_tol) {
      Vector grad = surface.gradient_at(seg.points[i]);
      Vector f = field(seg.points[i], u(seg.times[i]));
      if (std::abs(scaled_transversality(grad, f)) < opts.transversality_tol) {
        std::ostringstream msg;
        msg << "tangential contact with surface '" << surface.id
            << "' at t=" << seg.times[i];
        throw TransversalityError(msg.str(), seg.times[i]);
      }
    }
    if (!(s[i] < 0.0 && s[i + 1] >= 0.0)) continue;

    // Bracketed oriented crossing in [times[i], times[i+1]].
    double ta = seg.times[i], tb = seg.times[i + 1];
    const Vector& xa = seg.points[i];
    auto state_at = [&](double t) -> Vector {
      return rk4_span(field, xa, u, ta, t, 4);
    };
    double lo = ta, hi = tb;
    double t_mid = 0.5 * (lo + hi);
    Vector x_mid = state_at(t_mid);
    // Polish well past the contract tolerance; a tangency localized only to
    // the contract level would masquerade as a slow transversal crossing.
    const double polish_tol = std::min(1e-14, opts.constraint_tol);
    for (int iter = 0; iter < 200; ++iter) {
      double val = orient * surface.value(x_mid);
      if (std::abs(val) <= polish_tol) break;
      if (val < 0.0) {
        lo = t_mid;
      } else {
        hi = t_mid;
      }
      if (hi - lo < 1e-6 * (tb - ta)) {
        // Newton polish using the crossing speed as derivative.
        Vector grad = surface.gradient_at(x_mid);
        double sdot = orient * grad.dot(field(x_mid, u(t_mid)));
        double t_next =
            (sdot != 0.0) ? t_mid - val / sdot : 0.5 * (lo + hi);
        if (t_next <= lo || t_next >= hi) t_next = 0.5 * (lo + hi);
        t_mid = t_next;
      } else {
        t_mid = 0.5 * (lo + hi);
      }
      x_mid = state_at(t_mid);
    }
    double sdot = check_transversal(t_mid, x_mid);
    SwitchEvent ev;
    ev.time = t_mid;
    ev.x_minus = x_mid;
    ev.transversality = sdot;
    return ev;
  }
  return std::nullopt;
}

HybridTrajectory simulate_hybrid(const HybridSystem& sys,
                                 const std::vector<ControlProvider>& controls,
                                 const Vector& x0, int q0, double t0, double tf,
                                 const SimulateOptions& opts) {
  sys.check_consistent();
  if (controls.size() != sys.surfaces.size() + 1) {
    throw Error("simulate_hybrid: need one control provider per segment");
  }

  HybridTrajectory traj;
  traj.boundary_times.push_back(t0);
  int q = q0;
  Vector x = x0;
  double t = t0;

  const int schedule_len = int(sys.surfaces.size());
  for (int k = 0; k <= schedule_len; ++k) {
    IntegrateOptions iopts;
    iopts.steps = opts.steps_per_segment;
    iopts.control_breakpoints = opts.control_breakpoints;
    const ControlProvider& u = controls[size_t(k)];
    SegmentPath seg =
        integrate_segment(sys.fields[size_t(q)], x, u, t, tf, iopts);
    seg.state_index = q;
    seg.state_id = sys.states[size_t(q)];

    if (k == schedule_len) {
      traj.segments.push_back(std::move(seg));
      traj.state_sequence.push_back(q);
      traj.boundary_times.push_back(tf);
      break;
    }

    const SwitchingSurface& armed = sys.surfaces[size_t(k)];
    std::optional<SwitchEvent> ev =
        detect_switch(seg, sys.fields[size_t(q)], u, armed, opts.event);
    if (!ev) {
      std::ostringstream msg;
      msg << "scheduled surface '" << armed.id << "' (event " << k + 1 << " of "
          << schedule_len << ") not reached before tf=" << tf;
      throw IncompleteScheduleError(msg.str(), k);
    }

    // Truncate the stored path at the event.
    size_t keep = node_before(seg.times, ev->time);
    while (keep > 0 && seg.times[keep] >= ev->time - 1e-13) --keep;
    seg.times.resize(keep + 1);
    seg.points.resize(keep + 1);
    seg.controls.resize(keep + 1);
    seg.times.push_back(ev->time);
    seg.points.push_back(ev->x_minus);
    // Left-limit control value at the switch.
    double t_left = ev->time - 1e-12 * (1.0 + std::abs(ev->time));
    seg.controls.push_back(u(t_left));

    traj.segments.push_back(std::move(seg));
    traj.state_sequence.push_back(q);
    traj.boundary_times.push_back(ev->time);

    Vector x_plus = sys.jumps[size_t(k)](ev->x_minus);
    traj.jump_pairs.emplace_back(ev->x_minus, x_plus);

    q = sys.state_index(armed.to_state);
    x = x_plus;
    t = ev->time;
  }
  return traj;
}

HybridTrajectory simulate_hybrid(const HybridSystem& sys,
                                 const ControlSignal& u, const Vector& x0,
                                 int q0, double t0, double tf,
                                 const SimulateOptions& opts) {
  SimulateOptions merged = opts;
  for (double b : u.grid()) merged.control_breakpoints.push_back(b);
  std::vector<ControlProvider> providers(sys.surfaces.size() + 1, u.provider());
  return simulate_hybrid(sys, providers, x0, q0, t0, tf, merged);
}

Vector trajectory_eval(const HybridSystem& sys, const HybridTrajectory& traj,
                       const std::vector<ControlProvider>& controls, double t) {
  if (t < traj.t0() - 1e-12 || t > traj.tf() + 1e-12) {
    throw Error("trajectory_eval: time outside the trajectory span");
  }
  // Right-continuous segment lookup: at a switch time, the later segment.
  int k = 0;
  for (int i = 0; i < int(traj.segments.size()); ++i) {
    if (t >= traj.boundary_times[size_t(i)]) k = i;
  }
  const SegmentPath& seg = traj.segments[size_t(k)];
  double tq = std::min(std::max(t, seg.t_begin()), seg.t_end());
  size_t i = node_before(seg.times, tq);
  return rk4_span(sys.fields[size_t(seg.state_index)], seg.points[i],
                  controls[size_t(k)], seg.times[i], tq, 4);
}

namespace {

// Integrates vdot = J(t) v over the node sub-grid of [t1, t2], with the state
// linearly interpolated between stored nodes.
Vector variational_forward(const SegmentPath& seg, const ControlledField& field,
                           const ControlProvider& u, Vector v, double t1,
                           double t2) {
  auto jac_at = [&](size_t interval, double t) -> Matrix {
    Vector x = interp_state(seg, interval, t);
    return field.jacobian_x(x, u(t));
  };
  auto step = [&](size_t interval, double ta, double tb, Vector& vv) {
    double h = tb - ta;
    if (h == 0.0) return;
    Matrix J1 = jac_at(interval, ta);
    Matrix Jm = jac_at(interval, 0.5 * (ta + tb));
    Matrix J2 = jac_at(interval, right_stage_time(ta, h));
    Vector k1 = J1 * vv;
    Vector k2 = Jm * (vv + 0.5 * h * k1);
    Vector k3 = Jm * (vv + 0.5 * h * k2);
    Vector k4 = J2 * (vv + h * k3);
    vv += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  size_t i = node_before(seg.times, t1);
  double t = t1;
  while (t < t2 - 1e-14) {
    double t_next = (i + 1 < seg.times.size()) ? seg.times[i + 1] : t2;
    t_next = std::min(t_next, t2);
    step(i, t, t_next, v);
    t = t_next;
    if (i + 1 < seg.times.size() && t >= seg.times[i + 1] - 1e-14) ++i;
  }
  return v;
}

Vector adjoint_backward(const SegmentPath& seg, const ControlledField& field,
                        const ControlProvider& u, Vector p, double t2,
                        double t1) {
  auto jac_at = [&](size_t interval, double t) -> Matrix {
    Vector x = interp_state(seg, interval, t);
    return field.jacobian_x(x, u(t));
  };
  auto step = [&](size_t interval, double ta, double tb, Vector& pp) {
    // backward step from tb down to ta
    double h = ta - tb;  // negative
    if (h == 0.0) return;
    Matrix J1 = jac_at(interval, right_stage_time(ta, tb - ta));
    Matrix Jm = jac_at(interval, 0.5 * (ta + tb));
    Matrix J2 = jac_at(interval, ta);
    Vector k1 = -J1.transpose() * pp;
    Vector k2 = -Jm.transpose() * (pp + 0.5 * h * k1);
    Vector k3 = -Jm.transpose() * (pp + 0.5 * h * k2);
    Vector k4 = -J2.transpose() * (pp + h * k3);
    pp += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };

  size_t i = node_before(seg.times, t2);
  if (i + 1 >= seg.times.size()) i = seg.times.size() - 2;
  double t = t2;
  while (t > t1 + 1e-14) {
    double t_prev = std::max(seg.times[i], t1);
    step(i, t_prev, t, p);
    t = t_prev;
    if (i > 0 && t <= seg.times[i] + 1e-14) --i;
  }
  return p;
}

}  // namespace

Tangent pushforward(const SegmentPath& seg, const ControlledField& field,
                    const ControlProvider& u, const Tangent& v, double t1,
                    double t2) {
  if (t2 < t1) throw Error("pushforward: t2 must be >= t1");
  Vector out = variational_forward(seg, field, u, v.components, t1, t2);
  size_t i = node_before(seg.times, t2);
  return Tangent(ChartPoint(interp_state(seg, i, t2), v.base.manifold_id),
                 std::move(out));
}

std::vector<Vector> pushforward_path(const SegmentPath& seg,
                                     const ControlledField& field,
                                     const ControlProvider& u,
                                     const Vector& v0) {
  std::vector<Vector> out;
  out.reserve(seg.times.size());
  Vector v = v0;
  out.push_back(v);
  for (size_t i = 0; i + 1 < seg.times.size(); ++i) {
    v = variational_forward(seg, field, u, v, seg.times[i], seg.times[i + 1]);
    out.push_back(v);
  }
  return out;
}

Cotangent pullback(const SegmentPath& seg, const ControlledField& field,
                   const ControlProvider& u, const Cotangent& p, double t2,
                   double t1) {
  if (t1 > t2) throw Error("pullback: t1 must be <= t2");
  Vector out = adjoint_backward(seg, field, u, p.components, t2, t1);
  size_t i = node_before(seg.times, t1);
  return Cotangent(ChartPoint(interp_state(seg, i, t1), p.base.manifold_id),
                   std::move(out));
}

std::vector<Vector> pullback_path(const SegmentPath& seg,
                                  const ControlledField& field,
                                  const ControlProvider& u, const Vector& pT) {
  std::vector<Vector> out(seg.times.size());
  Vector p = pT;
  out.back() = p;
  for (size_t i = seg.times.size() - 1; i > 0; --i) {
    p = adjoint_backward(seg, field, u, p, seg.times[i], seg.times[i - 1]);
    out[i - 1] = p;
  }
  return out;
}

Matrix transport_matrix(const SegmentPath& seg, const ControlledField& field,
                        const ControlProvider& u, double t1, double t2) {
  const Eigen::Index n = seg.points.front().size();
  Matrix M = Matrix::Identity(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    M.col(c) = variational_forward(seg, field, u, M.col(c), t1, t2);
  }
  return M;
}

Matrix TransportOperator::matrix(double t2, double t1) const {
  if (t2 >= t1) return transport_matrix(*seg_, *field_, u_, t1, t2);
  // Inverse direction: invert the forward map.
  Matrix M = transport_matrix(*seg_, *field_, u_, t2, t1);
  return M.inverse();
}

}  // namespace hmp
