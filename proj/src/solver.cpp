#include "hmp/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "hmp/errors.hpp"
#include "hmp/flow.hpp"

namespace hmp {

namespace {

Matrix expm(const Matrix& M) { return M.exp(); }

// Pulled-back controllability Gramian int_0^dt e^{-As} B B^T e^{-A^T s} ds
// via the block-exponential construction.
Matrix pullback_gramian(const Matrix& A, const Matrix& B, double dt) {
  const Eigen::Index n = A.rows();
  Matrix M = Matrix::Zero(2 * n, 2 * n);
  M.topLeftCorner(n, n) = A;
  M.topRightCorner(n, n) = B * B.transpose();
  M.bottomRightCorner(n, n) = -A.transpose();
  Matrix E = expm(M * dt);
  return E.bottomRightCorner(n, n).transpose() * E.topRightCorner(n, n);
}

}  // namespace

Vector LqSegment::control_value(double t) const {
  return B.transpose() * (expm(-A.transpose() * (t - t0)) * eta);
}

Vector LqSegment::costate(double t) const {
  return -(expm(-A.transpose() * (t - t0)) * eta);
}

ControlProvider LqSegment::control() const {
  LqSegment copy = *this;
  return [copy](double t) { return copy.control_value(t); };
}

ControlSignal LqSegment::sampled_signal(int nodes) const {
  std::vector<double> grid(size_t(nodes), 0.0);
  std::vector<Vector> values{size_t(nodes), Vector()};
  for (int i = 0; i < nodes; ++i) {
    grid[size_t(i)] = t0 + (t1 - t0) * double(i) / double(nodes - 1);
    values[size_t(i)] = control_value(grid[size_t(i)]);
  }
  return ControlSignal(std::move(grid), std::move(values));
}

LqSegment lq_steer(const Matrix& A, const Matrix& B, const Vector& a,
                   const Vector& b, double t0, double t1,
                   const LqOptions& opts) {
  if (!(t1 > t0)) throw Error("lq_steer: empty time span");
  const double dt = t1 - t0;
  Matrix W = pullback_gramian(A, B, dt);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (W + W.transpose()));
  double emin = es.eigenvalues().minCoeff();
  double emax = es.eigenvalues().maxCoeff();
  double cond = (emin > 0.0) ? emax / emin
                             : std::numeric_limits<double>::infinity();
  if (!(emin > 0.0) || cond > opts.cond_limit) {
    std::ostringstream msg;
    msg << "steering Gramian ill conditioned on [" << t0 << ", " << t1
        << "] (condition " << cond << ")";
    throw UncontrollableSegmentError(msg.str());
  }

  Vector d = expm(-A * dt) * b - a;
  LqSegment seg;
  seg.A = A;
  seg.B = B;
  seg.t0 = t0;
  seg.t1 = t1;
  seg.eta = es.eigenvectors() *
            es.eigenvalues().cwiseInverse().asDiagonal() *
            (es.eigenvectors().transpose() * d);
  seg.cost = 0.5 * d.dot(seg.eta);
  seg.gramian_condition = cond;
  return seg;
}

namespace {

double wrap_period(double value, double period) {
  double r = std::fmod(value, period);
  if (r < 0.0) r += period;
  if (r >= period) r -= period;
  return r;
}

// Representative of `value` (mod period) nearest to `anchor`.
double nearest_lift(double value, double period, double anchor) {
  double base = value + period * std::round((anchor - value) / period);
  return base;
}

struct DecisionLayout {
  int switches = 0;
  int params_per_switch = 0;
  int size() const { return switches * (params_per_switch + 1); }

  Vector flatten(const SwitchDecision& d) const {
    Vector v(size());
    int idx = 0;
    for (const auto& p : d.on_surface) {
      for (Eigen::Index i = 0; i < p.size(); ++i) v[idx++] = p[i];
    }
    for (double t : d.times) v[idx++] = t;
    return v;
  }

  SwitchDecision unflatten(const Vector& v) const {
    SwitchDecision d;
    int idx = 0;
    for (int k = 0; k < switches; ++k) {
      Vector p(params_per_switch);
      for (int i = 0; i < params_per_switch; ++i) p[i] = v[idx++];
      d.on_surface.push_back(std::move(p));
    }
    for (int k = 0; k < switches; ++k) d.times.push_back(v[idx++]);
    return d;
  }
};

}  // namespace

namespace {

// Segment chain induced by a decision: per-segment mode, span, start point,
// and target (with periodic free coordinates lifted next to the previous
// endpoint).
struct SegmentChain {
  std::vector<int> modes;
  std::vector<double> tt;        // L + 2 boundary times
  std::vector<Vector> starts;    // per segment
  std::vector<Vector> targets;   // per segment (pre-jump switch points, xf last)
};

SegmentChain build_chain(const HybridSystem& sys, const SwitchDecision& decision,
                         const Vector& x0, const Vector& xf, double t0,
                         double tf) {
  const int L = decision.switches();
  if (int(sys.surfaces.size()) != L) {
    throw Error("decision length does not match the surface schedule");
  }
  SegmentChain chain;
  chain.tt.push_back(t0);
  for (double t : decision.times) chain.tt.push_back(t);
  chain.tt.push_back(tf);
  for (size_t i = 0; i + 1 < chain.tt.size(); ++i) {
    if (chain.tt[i + 1] - chain.tt[i] <= 1e-6) {
      throw Error("decision times not increasing within the horizon");
    }
  }

  Vector prev = x0;
  int q = sys.state_index(sys.surfaces.empty() ? sys.states.front()
                                               : sys.surfaces[0].from_state);
  for (int k = 0; k <= L; ++k) {
    Vector target;
    if (k < L) {
      const SwitchingSurface& s = sys.surfaces[size_t(k)];
      if (!s.parametrizable()) {
        throw Error("surface '" + s.id + "' has no parametrization");
      }
      target = s.from_parameters(decision.on_surface[size_t(k)]);
      for (Eigen::Index i = 0; i < target.size(); ++i) {
        if (int(i) == *s.axis) continue;
        const auto& period = sys.manifold->periods()[size_t(i)];
        if (period) target[i] = nearest_lift(target[i], *period, prev[i]);
      }
    } else {
      target = xf;
    }
    chain.modes.push_back(q);
    chain.starts.push_back(prev);
    chain.targets.push_back(target);
    if (k < L) {
      prev = sys.jumps[size_t(k)](target);
      q = sys.state_index(sys.surfaces[size_t(k)].to_state);
    }
  }
  return chain;
}

}  // namespace

DecisionEval evaluate_decision(const HybridSystem& sys,
                               const SwitchDecision& decision,
                               const Vector& x0, const Vector& xf, double t0,
                               double tf, const SolverOptions& opts) {
  SegmentChain chain = build_chain(sys, decision, x0, xf, t0, tf);
  LqOptions lq_opts;
  lq_opts.cond_limit = opts.gramian_cond_limit;

  DecisionEval eval;
  for (size_t k = 0; k < chain.modes.size(); ++k) {
    const ControlledField& field = sys.fields[size_t(chain.modes[k])];
    if (!field.linear) {
      throw Error("mode '" + sys.states[size_t(chain.modes[k])] +
                  "' is not linear-in-chart; outside this solver's class");
    }
    eval.segments.push_back(lq_steer(field.linear->A, field.linear->B,
                                     chain.starts[k], chain.targets[k],
                                     chain.tt[k], chain.tt[k + 1], lq_opts));
    eval.cost += eval.segments.back().cost;
  }
  eval.cost += sys.terminal_cost.eval ? sys.terminal_cost(xf) : 0.0;
  return eval;
}

Vector analytic_decision_gradient(const HybridSystem& sys,
                                  const SwitchDecision& decision,
                                  const Vector& x0, const Vector& xf,
                                  double t0, double tf,
                                  const SolverOptions& opts) {
  const int L = decision.switches();
  SegmentChain chain = build_chain(sys, decision, x0, xf, t0, tf);
  DecisionEval eval = evaluate_decision(sys, decision, x0, xf, t0, tf, opts);

  auto hamiltonian_of = [](const LqSegment& seg, const Vector& x, double t) {
    Vector p = seg.costate(t);
    Vector u = -seg.B.transpose() * p;
    return p.dot(seg.A * x + seg.B * u) + 0.5 * u.squaredNorm();
  };

  DecisionLayout layout{L, sys.dim() - 1};
  Vector g = Vector::Zero(layout.size());
  for (int k = 0; k < L; ++k) {
    double s = chain.tt[size_t(k) + 1];
    const Vector& x_minus = chain.targets[size_t(k)];
    const Vector& x_plus = chain.starts[size_t(k) + 1];
    const LqSegment& pre = eval.segments[size_t(k)];
    const LqSegment& post = eval.segments[size_t(k) + 1];
    Vector p_minus = pre.costate(s);
    Vector p_plus = post.costate(s);
    Matrix Tz = sys.jumps[size_t(k)].jacobian(x_minus);
    Vector mismatch = Tz.transpose() * p_plus - p_minus;

    const SwitchingSurface& surf = sys.surfaces[size_t(k)];
    int pi = 0;
    for (int i = 0; i < sys.dim(); ++i) {
      if (i == *surf.axis) continue;
      g[k * layout.params_per_switch + pi] = mismatch[i];
      ++pi;
    }
    g[L * layout.params_per_switch + k] =
        hamiltonian_of(pre, x_minus, s) - hamiltonian_of(post, x_plus, s);
  }
  return g;
}

std::optional<SwitchDecision> geodesic_step(const HybridSystem& sys,
                                            const SwitchDecision& decision,
                                            const Vector& gradient, double step,
                                            double t0, double tf,
                                            double min_time_gap) {
  DecisionLayout layout{decision.switches(), sys.dim() - 1};
  if (gradient.size() != layout.size()) {
    throw Error("gradient size does not match the decision layout");
  }
  Vector v = layout.flatten(decision) - step * gradient;
  SwitchDecision out = layout.unflatten(v);

  // Wrap periodic surface parameters onto their circles.
  for (int k = 0; k < out.switches(); ++k) {
    const SwitchingSurface& s = sys.surfaces[size_t(k)];
    if (!s.axis) continue;
    int pi = 0;
    for (int i = 0; i < sys.dim(); ++i) {
      if (i == *s.axis) continue;
      const auto& period = sys.manifold->periods()[size_t(i)];
      if (period) {
        out.on_surface[size_t(k)][pi] =
            wrap_period(out.on_surface[size_t(k)][pi], *period);
      }
      ++pi;
    }
  }

  // Clamp times forward to keep the ordering with the margin.
  double lo = t0;
  for (int k = 0; k < out.switches(); ++k) {
    out.times[size_t(k)] = std::max(out.times[size_t(k)], lo + min_time_gap);
    lo = out.times[size_t(k)];
  }
  if (out.times.back() > tf - min_time_gap) {
    // Push back from the end; reject if the window collapses.
    double hi = tf;
    for (int k = out.switches() - 1; k >= 0; --k) {
      out.times[size_t(k)] = std::min(out.times[size_t(k)], hi - min_time_gap);
      hi = out.times[size_t(k)];
    }
    if (out.times.front() < t0 + min_time_gap) return std::nullopt;
    for (int k = 1; k < out.switches(); ++k) {
      if (out.times[size_t(k)] - out.times[size_t(k - 1)] < 0.5 * min_time_gap) {
        return std::nullopt;
      }
    }
  }
  return out;
}

namespace {

// Circular-aware difference between decision vectors (periodic parameters
// compared through the shortest arc).
Vector decision_difference(const HybridSystem& sys, const DecisionLayout& layout,
                           const SwitchDecision& a, const SwitchDecision& b) {
  Vector va = layout.flatten(a), vb = layout.flatten(b);
  Vector d = va - vb;
  int idx = 0;
  for (int k = 0; k < a.switches(); ++k) {
    const SwitchingSurface& s = sys.surfaces[size_t(k)];
    int pi = 0;
    for (int i = 0; i < sys.dim(); ++i) {
      if (s.axis && i == *s.axis) continue;
      const auto& period = sys.manifold->periods()[size_t(i)];
      if (period) {
        double delta = d[idx + pi];
        delta -= *period * std::round(delta / *period);
        d[idx + pi] = delta;
      }
      ++pi;
    }
    idx += layout.params_per_switch;
  }
  return d;
}

struct DescentState {
  SwitchDecision decision;
  double cost = 0.0;
  Vector gradient;
};

}  // namespace

SolverSolution solve(const HybridSystem& sys, const Vector& x0,
                     const Vector& xf, double t0, double tf,
                     const SolverOptions& opts) {
  sys.check_consistent();
  for (size_t q = 0; q < sys.states.size(); ++q) {
    const Loss* l = sys.loss(int(q));
    if (!l || !l->is_quadratic_control) {
      throw Error(
          "solver class requires the quadratic control running cost in every "
          "mode");
    }
  }
  const int L = int(sys.surfaces.size());
  DecisionLayout layout{L, sys.dim() - 1};

  auto cost_of = [&](const SwitchDecision& d) -> double {
    return evaluate_decision(sys, d, x0, xf, t0, tf, opts).cost;
  };

  auto fd_gradient = [&](const SwitchDecision& d) -> Vector {
    Vector v = layout.flatten(d);
    Vector g(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      Vector vp = v, vm = v;
      vp[i] += opts.fd_step;
      vm[i] -= opts.fd_step;
      g[i] = (cost_of(layout.unflatten(vp)) - cost_of(layout.unflatten(vm))) /
             (2.0 * opts.fd_step);
    }
    return g;
  };

  // Default iterate: times uniform over (t0, tf), surface parameters zero.
  std::vector<SwitchDecision> starts;
  if (opts.initial) {
    starts.push_back(*opts.initial);
  } else {
    SwitchDecision d0;
    for (int k = 0; k < L; ++k) {
      d0.on_surface.push_back(Vector::Zero(sys.dim() - 1));
      d0.times.push_back(t0 + (tf - t0) * double(k + 1) / double(L + 1));
    }
    starts.push_back(std::move(d0));
  }
  for (const auto& s : opts.extra_starts) starts.push_back(s);

  std::optional<DescentState> best;
  std::vector<IterationRecord> log;
  bool any_converged = false;

  for (const SwitchDecision& start : starts) {
    DescentState cur;
    cur.decision = start;
    cur.cost = cost_of(cur.decision);
    cur.gradient = fd_gradient(cur.decision);
    double trial_step = 1.0 / std::max(1.0, cur.gradient.norm());
    bool converged = false;

    int it = 0;
    for (; it < opts.max_iter; ++it) {
      double gn = cur.gradient.norm();
      log.push_back({it, cur.cost, gn, trial_step});
      if (gn < opts.grad_tol) {
        converged = true;
        break;
      }

      double s = trial_step;
      std::optional<SwitchDecision> accepted;
      double accepted_cost = 0.0;
      for (int halving = 0; halving < opts.max_halvings; ++halving) {
        std::optional<SwitchDecision> cand = geodesic_step(
            sys, cur.decision, cur.gradient, s, t0, tf, opts.min_time_gap);
        if (cand) {
          double c;
          bool usable = true;
          try {
            c = cost_of(*cand);
          } catch (const UncontrollableSegmentError&) {
            usable = false;
            c = 0.0;
          } catch (const Error&) {
            usable = false;
            c = 0.0;
          }
          if (usable && c <= cur.cost - opts.armijo_c * s * gn * gn) {
            accepted = std::move(cand);
            accepted_cost = c;
            break;
          }
        }
        s *= 0.5;
      }
      if (!accepted) {
        std::ostringstream msg;
        msg << "line search stalled at iteration " << it << " (cost "
            << cur.cost << ", |grad| " << gn << ", iterate ["
            << layout.flatten(cur.decision).transpose() << "])";
        throw SolverStalledError(msg.str(), cur.cost);
      }

      Vector g_new = fd_gradient(*accepted);
      Vector dx = decision_difference(sys, layout, *accepted, cur.decision);
      Vector dg = g_new - cur.gradient;
      double denom = dx.dot(dg);
      trial_step = (denom > 1e-18) ? dx.squaredNorm() / denom : 2.0 * s;
      trial_step = std::clamp(trial_step, 1e-12, 1e3);

      cur.decision = std::move(*accepted);
      cur.cost = accepted_cost;
      cur.gradient = std::move(g_new);
    }
    any_converged = any_converged || converged;
    if (!best || cur.cost < best->cost) best = std::move(cur);
  }

  // Newton polish on the analytic stationarity system. The finite-difference
  // optimum is accurate to ~|grad|; backward covector transport amplifies
  // that residual exponentially on stiff segments, so the adjoint checks
  // need the stationarity defects driven near machine precision.
  bool polishable = opts.polish;
  for (const auto& s : sys.surfaces) polishable = polishable && s.axis.has_value();
  if (polishable && L > 0) {
    auto residual = [&](const SwitchDecision& d) -> Vector {
      return analytic_decision_gradient(sys, d, x0, xf, t0, tf, opts);
    };
    SwitchDecision d = best->decision;
    Vector F = residual(d);
    for (int it = 0; it < opts.polish_max_iter && F.norm() > opts.polish_tol;
         ++it) {
      Vector v = layout.flatten(d);
      const double h = 1e-6;
      Matrix JF(F.size(), v.size());
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        Vector vp = v, vm = v;
        vp[i] += h;
        vm[i] -= h;
        JF.col(i) = (residual(layout.unflatten(vp)) -
                     residual(layout.unflatten(vm))) /
                    (2.0 * h);
      }
      Vector delta = JF.fullPivLu().solve(-F);
      bool improved = false;
      for (double alpha = 1.0; alpha > 1e-6; alpha *= 0.5) {
        SwitchDecision cand = layout.unflatten(v + alpha * delta);
        bool ordered = true;
        double prev_t = t0;
        for (double t : cand.times) {
          ordered = ordered && (t > prev_t + 0.5 * opts.min_time_gap);
          prev_t = t;
        }
        ordered = ordered && (cand.times.back() < tf - 0.5 * opts.min_time_gap);
        if (!ordered) continue;
        Vector Fc;
        try {
          Fc = residual(cand);
        } catch (const Error&) {
          continue;
        }
        if (Fc.norm() < (1.0 - 1e-4 * alpha) * F.norm()) {
          d = std::move(cand);
          F = std::move(Fc);
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    if (F.norm() <= best->gradient.norm()) {
      best->decision = d;
      best->cost = cost_of(d);
      best->gradient = F;
    }
  }

  SolverSolution sol;
  sol.decision = best->decision;
  sol.cost = best->cost;
  sol.grad_norm = best->gradient.norm();
  sol.converged =
      (any_converged || sol.grad_norm < opts.grad_tol) &&
      sol.grad_norm < 10 * opts.grad_tol;
  sol.iterations = std::move(log);

  DecisionEval eval = evaluate_decision(sys, sol.decision, x0, xf, t0, tf, opts);
  sol.lq_segments = eval.segments;
  for (const auto& seg : eval.segments) {
    sol.controls.push_back(seg.sampled_signal(opts.control_export_nodes));
  }

  std::vector<ControlProvider> providers;
  for (const auto& seg : eval.segments) providers.push_back(seg.control());

  SimulateOptions sim;
  sim.steps_per_segment = opts.resim_steps;
  int q0 = sys.state_index(sys.surfaces.empty() ? sys.states.front()
                                                : sys.surfaces[0].from_state);
  sol.trajectory = simulate_hybrid(sys, providers, x0, q0, t0, tf, sim);
  sol.resimulated_cost = hybrid_cost(sys, sol.trajectory, providers);

  sol.p_tf = eval.segments.back().costate(tf);
  sol.adjoint = backward_adjoint_bolza(sys, sol.trajectory, providers, sol.p_tf);
  PmpOptions pmp_opts;
  pmp_opts.control_grid = opts.pmp_control_grid;
  pmp_opts.time_samples = opts.pmp_time_samples;
  sol.pmp = check_pmp(sol.adjoint.lifted, sol.adjoint.lifted_traj,
                      sol.adjoint.adjoint, pmp_opts);
  return sol;
}

}  // namespace hmp
