#include "hmp/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

Cotangent terminal_covector(const TerminalCost& h, const ChartPoint& x_tf) {
  return Cotangent(x_tf, h.gradient(x_tf.coords));
}

double hamiltonian(const HybridSystem& sys, int q, const Vector& x,
                   const Vector& p, const Vector& u) {
  return p.dot(sys.fields[size_t(q)](x, u));
}

AdjointJump adjoint_switch_jump(const Cotangent& p_plus, const JumpMap& jump,
                                const Cotangent& dN, const Tangent& f0_minus,
                                const Tangent& f1_plus,
                                double transversality_tol) {
  const Vector& dn = dN.components;
  const Vector& f0 = f0_minus.components;
  double denom = dn.dot(f0);
  double scale = dn.norm() * f0.norm();
  if (scale < 1e-300 || std::abs(denom) < transversality_tol * scale) {
    throw TransversalityError(
        "adjoint jump requires a transversal crossing (<dN, f0-> too small)",
        0.0);
  }
  Matrix Tz = jump.jacobian(f0_minus.base.coords);
  Vector Tz_f0 = Tz * f0;
  double mu = p_plus.components.dot(f1_plus.components - Tz_f0) / denom;

  AdjointJump out;
  out.p_minus = Cotangent(f0_minus.base,
                          Tz.transpose() * p_plus.components + mu * dn);
  out.mu = mu;
  out.hamiltonian_mismatch = out.p_minus.components.dot(f0) -
                             p_plus.components.dot(f1_plus.components);
  return out;
}

AdjointTrajectory backward_adjoint(
    const HybridSystem& sys, const HybridTrajectory& traj,
    const std::vector<ControlProvider>& controls,
    const std::optional<Vector>& p_tf_override) {
  if (sys.has_losses()) {
    throw Error(
        "backward_adjoint expects a Mayer system; use backward_adjoint_bolza");
  }
  if (controls.size() != traj.segments.size()) {
    throw Error("backward_adjoint: one control provider per segment required");
  }
  const int n_seg = int(traj.segments.size());
  const std::string mid = sys.manifold->name();

  AdjointTrajectory adj;
  adj.times.resize(size_t(n_seg));
  adj.covectors.resize(size_t(n_seg));
  adj.hamiltonians.resize(size_t(n_seg));
  adj.mus.assign(traj.jump_pairs.size(), 0.0);
  adj.switch_hamiltonian_gaps.assign(traj.jump_pairs.size(), 0.0);

  Vector p = p_tf_override
                 ? *p_tf_override
                 : sys.terminal_cost.gradient(traj.final_state());
  adj.p_tf = p;

  for (int k = n_seg - 1; k >= 0; --k) {
    const SegmentPath& seg = traj.segments[size_t(k)];
    const ControlledField& field = sys.fields[size_t(seg.state_index)];
    std::vector<Vector> covs =
        pullback_path(seg, field, controls[size_t(k)], p);

    adj.times[size_t(k)] = seg.times;
    adj.hamiltonians[size_t(k)].resize(seg.times.size());
    for (size_t i = 0; i < seg.times.size(); ++i) {
      adj.hamiltonians[size_t(k)][i] =
          covs[i].dot(field(seg.points[i], seg.controls[i]));
    }
    adj.covectors[size_t(k)] = std::move(covs);

    if (k > 0) {
      // Process the switch at the head of this segment.
      const SegmentPath& prev = traj.segments[size_t(k - 1)];
      const ControlledField& field_prev =
          sys.fields[size_t(prev.state_index)];
      const Vector& x_minus = traj.jump_pairs[size_t(k - 1)].first;
      const Vector& x_plus = traj.jump_pairs[size_t(k - 1)].second;

      Cotangent p_plus(ChartPoint(x_plus, mid),
                       adj.covectors[size_t(k)].front());
      Cotangent dN =
          surface_oneform(sys.surfaces[size_t(k - 1)], ChartPoint(x_minus, mid));
      Tangent f0(ChartPoint(x_minus, mid),
                 field_prev(x_minus, prev.controls.back()));
      Tangent f1(ChartPoint(x_plus, mid),
                 field(x_plus, seg.controls.front()));

      AdjointJump jump = adjoint_switch_jump(
          p_plus, sys.jumps[size_t(k - 1)], dN, f0, f1);
      adj.mus[size_t(k - 1)] = jump.mu;
      double h_minus = jump.p_minus.components.dot(f0.components);
      double h_plus = p_plus.components.dot(f1.components);
      adj.switch_hamiltonian_gaps[size_t(k - 1)] = std::abs(h_minus - h_plus);
      p = jump.p_minus.components;
    }
  }
  return adj;
}

HybridTrajectory lift_trajectory(const HybridSystem& sys,
                                 const HybridSystem& lifted,
                                 const HybridTrajectory& traj,
                                 const std::vector<ControlProvider>& controls) {
  const int n = sys.dim();
  HybridTrajectory out;
  out.boundary_times = traj.boundary_times;
  out.state_sequence = traj.state_sequence;

  double aux = 0.0;
  for (size_t k = 0; k < traj.segments.size(); ++k) {
    const SegmentPath& seg = traj.segments[k];
    const ControlledField& lf = lifted.fields[size_t(seg.state_index)];
    SegmentPath ls;
    ls.state_index = seg.state_index;
    ls.state_id = seg.state_id;
    ls.times = seg.times;
    ls.controls = seg.controls;
    ls.points.reserve(seg.points.size());

    Vector xhat(n + 1);
    xhat.head(n) = seg.points.front();
    xhat[n] = aux;
    ls.points.push_back(xhat);
    const ControlProvider& u = controls[k];
    for (size_t i = 0; i + 1 < seg.times.size(); ++i) {
      double t = seg.times[i], h = seg.times[i + 1] - seg.times[i];
      // One RK4 interval on the lifted field starting from the stored x node,
      // keeping only the accumulator component.
      Vector z(n + 1);
      z.head(n) = seg.points[i];
      z[n] = aux;
      Vector k1 = lf(z, u(t));
      Vector k2 = lf(z + 0.5 * h * k1, u(t + 0.5 * h));
      Vector k3 = lf(z + 0.5 * h * k2, u(t + 0.5 * h));
      // stay on this interval's control piece at the right endpoint
      Vector k4 = lf(z + h * k3, u(t + h * (1.0 - 1e-9)));
      aux += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
      Vector node(n + 1);
      node.head(n) = seg.points[i + 1];
      node[n] = aux;
      ls.points.push_back(node);
    }
    out.segments.push_back(std::move(ls));
    if (k < traj.jump_pairs.size()) {
      Vector minus(n + 1), plus(n + 1);
      minus.head(n) = traj.jump_pairs[k].first;
      minus[n] = aux;
      plus.head(n) = traj.jump_pairs[k].second;
      plus[n] = aux;  // jumps act as the identity on the accumulator
      out.jump_pairs.emplace_back(std::move(minus), std::move(plus));
    }
  }
  return out;
}

BolzaAdjoint backward_adjoint_bolza(
    const HybridSystem& sys, const HybridTrajectory& traj,
    const std::vector<ControlProvider>& controls,
    const std::optional<Vector>& p_tf_override) {
  BolzaAdjoint out;
  out.lifted = mayer_lift(sys);
  out.lifted_traj = lift_trajectory(sys, out.lifted, traj, controls);
  std::optional<Vector> lifted_override;
  if (p_tf_override) {
    if (p_tf_override->size() == sys.dim()) {
      Vector v(sys.dim() + 1);
      v.head(sys.dim()) = *p_tf_override;
      v[sys.dim()] = 1.0;  // normal multiplier
      lifted_override = v;
    } else {
      lifted_override = *p_tf_override;
    }
  }
  out.adjoint =
      backward_adjoint(out.lifted, out.lifted_traj, controls, lifted_override);
  return out;
}

double hybrid_cost(const HybridSystem& sys, const HybridTrajectory& traj,
                   const std::vector<ControlProvider>& controls) {
  if (!sys.has_losses()) {
    return sys.terminal_cost(traj.final_state());
  }
  HybridSystem lifted = mayer_lift(sys);
  HybridTrajectory lt = lift_trajectory(sys, lifted, traj, controls);
  return lifted.terminal_cost(lt.final_state());
}

namespace {

// Minimum of H over a per-axis uniform grid with one quadratic refinement
// around the grid minimizer (exact for Hamiltonians quadratic in u).
double grid_min_hamiltonian(const HybridSystem& sys, int q, const Vector& x,
                            const Vector& p, int grid_points) {
  const int m = sys.control_dim();
  auto H = [&](const Vector& u) { return hamiltonian(sys, q, x, p, u); };

  auto axis_value = [&](int axis, int idx) {
    double lo = sys.control_bounds[size_t(axis)][0];
    double hi = sys.control_bounds[size_t(axis)][1];
    return lo + (hi - lo) * double(idx) / double(grid_points - 1);
  };

  auto refine_axis = [&](Vector u, int axis, double h) -> double {
    // Parabola through u_axis - h, u_axis, u_axis + h.
    Vector um = u, up = u;
    um[axis] -= h;
    up[axis] += h;
    double fm = H(um), f0 = H(u), fp = H(up);
    double curv = fp - 2.0 * f0 + fm;
    double best = std::min({fm, f0, fp});
    if (curv > 1e-300) {
      double delta = -0.5 * h * (fp - fm) / curv;
      Vector us = u;
      us[axis] += std::clamp(delta, -h, h);
      best = std::min(best, H(us));
    }
    return best;
  };

  if (m == 1) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = 0;
    Vector u(1);
    for (int i = 0; i < grid_points; ++i) {
      u[0] = axis_value(0, i);
      double v = H(u);
      if (v < best) {
        best = v;
        best_i = i;
      }
    }
    double h = (sys.control_bounds[0][1] - sys.control_bounds[0][0]) /
               double(grid_points - 1);
    if (best_i > 0 && best_i + 1 < grid_points) {
      Vector u0(1);
      u0[0] = axis_value(0, best_i);
      best = std::min(best, refine_axis(u0, 0, h));
    }
    return best;
  }

  // Multi-axis: full tensor grid for two axes, cyclic per-axis sweeps above.
  if (m == 2) {
    double best = std::numeric_limits<double>::infinity();
    Vector u(2), ubest(2);
    for (int i = 0; i < grid_points; ++i) {
      u[0] = axis_value(0, i);
      for (int j = 0; j < grid_points; ++j) {
        u[1] = axis_value(1, j);
        double v = H(u);
        if (v < best) {
          best = v;
          ubest = u;
        }
      }
    }
    for (int axis = 0; axis < 2; ++axis) {
      double h = (sys.control_bounds[size_t(axis)][1] -
                  sys.control_bounds[size_t(axis)][0]) /
                 double(grid_points - 1);
      best = std::min(best, refine_axis(ubest, axis, h));
    }
    return best;
  }

  Vector u(m);
  for (int axis = 0; axis < m; ++axis) u[axis] = axis_value(axis, grid_points / 2);
  double best = H(u);
  for (int sweep = 0; sweep < 3; ++sweep) {
    for (int axis = 0; axis < m; ++axis) {
      double besta = std::numeric_limits<double>::infinity();
      int besti = 0;
      Vector ua = u;
      for (int i = 0; i < grid_points; ++i) {
        ua[axis] = axis_value(axis, i);
        double v = H(ua);
        if (v < besta) {
          besta = v;
          besti = i;
        }
      }
      u[axis] = axis_value(axis, besti);
      best = std::min(best, besta);
    }
  }
  return best;
}

}  // namespace

PMPReport check_pmp(const HybridSystem& sys, const HybridTrajectory& traj,
                    const AdjointTrajectory& adj, const PmpOptions& opts) {
  PMPReport report;
  report.switch_hamiltonian_gaps = adj.switch_hamiltonian_gaps;
  report.samples.reserve(size_t(opts.time_samples));

  for (int s = 0; s < opts.time_samples; ++s) {
    double t = traj.t0() + (traj.tf() - traj.t0()) * (s + 0.5) /
                               double(opts.time_samples);
    int k = 0;
    for (int i = 0; i < int(traj.segments.size()); ++i) {
      if (t >= traj.boundary_times[size_t(i)]) k = i;
    }
    const SegmentPath& seg = traj.segments[size_t(k)];
    auto it = std::lower_bound(seg.times.begin(), seg.times.end(), t);
    size_t node = std::min(size_t(it - seg.times.begin()),
                           seg.times.size() - 1);

    const Vector& x = seg.points[node];
    const Vector& p = adj.covectors[size_t(k)][node];
    const Vector& u = seg.controls[node];
    double h_on = hamiltonian(sys, seg.state_index, x, p, u);
    double h_min =
        grid_min_hamiltonian(sys, seg.state_index, x, p, opts.control_grid);

    PmpSample sample;
    sample.t = seg.times[node];
    sample.segment = k;
    sample.gap = h_on - h_min;
    report.samples.push_back(sample);
    report.max_min_violation =
        std::max(report.max_min_violation, sample.gap);
  }
  return report;
}

double switch_jump_direction_residual(const HybridSystem& sys,
                                      const HybridTrajectory& traj,
                                      const AdjointTrajectory& adj, int k) {
  const Vector& x_minus = traj.jump_pairs[size_t(k)].first;
  Matrix Tz = sys.jumps[size_t(k)].jacobian(x_minus);
  const Vector& p_plus = adj.covectors[size_t(k) + 1].front();
  const Vector& p_minus = adj.covectors[size_t(k)].back();
  Vector jump_vec = p_minus - Tz.transpose() * p_plus;
  Vector dn = sys.surfaces[size_t(k)].gradient_at(x_minus);
  double nn = dn.squaredNorm();
  if (nn < 1e-300) return jump_vec.norm();
  Vector off = jump_vec - (jump_vec.dot(dn) / nn) * dn;
  double denom = std::max(jump_vec.norm(), 1e-30);
  return off.norm() / denom;
}

}  // namespace hmp
