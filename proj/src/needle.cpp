#include "hmp/needle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

ControlSignal perturb_control(const ControlSignal& u, const NeedleSpec& spec,
                              double eps,
                              const std::optional<SwitchHold>& hold) {
  ControlSignal out = u;
  if (eps > 0.0) {
    if (spec.t1 - eps < u.grid().front() - 1e-12) {
      throw Error("needle interval escapes the control horizon");
    }
    out.override_interval(spec.t1 - eps, spec.t1, spec.u1);
  }
  if (hold) {
    double a = std::min(hold->t_s, hold->t_s_eps);
    double b = std::max(hold->t_s, hold->t_s_eps);
    if (b > a) out.override_interval(a, b, hold->hold_value);
  }
  return out;
}

Tangent elementary_perturbation(const ControlledField& field,
                                const ChartPoint& x_t1, const Vector& u1,
                                const Vector& u_nominal) {
  return Tangent(x_t1, field(x_t1.coords, u1) - field(x_t1.coords, u_nominal));
}

double switching_time_derivative(const Cotangent& dN, const Tangent& f0_minus,
                                 const Tangent& w, SwitchBranch branch,
                                 double transversality_tol) {
  double denom = dN.components.dot(f0_minus.components);
  double scale = dN.components.norm() * f0_minus.components.norm();
  if (scale < 1e-300 || std::abs(denom) < transversality_tol * scale) {
    throw TransversalityError(
        "switching-time derivative needs a transversal crossing", 0.0);
  }
  double late = -dN.components.dot(w.components) / denom;
  return branch == SwitchBranch::kLate ? late : -late;
}

Tangent propagate_through_switch(const Tangent& v_minus, double dts_deps,
                                 const JumpMap& jump, const Tangent& f0_minus,
                                 const Tangent& f1_plus) {
  Matrix Tz = jump.jacobian(v_minus.base.coords);
  Vector out = Tz * v_minus.components +
               dts_deps * (Tz * f0_minus.components - f1_plus.components);
  return Tangent(f1_plus.base, std::move(out));
}

Matrix switch_variation_matrix(const JumpMap& jump, const Vector& x_minus,
                               const Cotangent& dN, const Tangent& f0_minus,
                               const Tangent& f1_plus) {
  Matrix Tz = jump.jacobian(x_minus);
  double denom = dN.components.dot(f0_minus.components);
  Vector dir = Tz * f0_minus.components - f1_plus.components;
  return Tz - (dir / denom) * dN.components.transpose();
}

TerminalVariationMap::TerminalVariationMap(
    const HybridSystem& sys, const HybridTrajectory& traj,
    const std::vector<ControlProvider>& controls) {
  const int n_seg = int(traj.segments.size());
  const std::string mid = sys.manifold->name();
  node_to_end_.resize(size_t(n_seg));
  tail_.resize(size_t(n_seg));

  for (int k = 0; k < n_seg; ++k) {
    const SegmentPath& seg = traj.segments[size_t(k)];
    const ControlledField& field = sys.fields[size_t(seg.state_index)];
    const size_t m = seg.times.size();
    std::vector<Matrix>& maps = node_to_end_[size_t(k)];
    maps.resize(m);
    maps[m - 1] = Matrix::Identity(sys.dim(), sys.dim());
    for (size_t i = m - 1; i > 0; --i) {
      Matrix step = transport_matrix(seg, field, controls[size_t(k)],
                                     seg.times[i - 1], seg.times[i]);
      maps[i - 1] = maps[i] * step;
    }
  }

  tail_[size_t(n_seg - 1)] = Matrix::Identity(sys.dim(), sys.dim());
  for (int k = n_seg - 2; k >= 0; --k) {
    const SegmentPath& seg = traj.segments[size_t(k)];
    const SegmentPath& next = traj.segments[size_t(k) + 1];
    const Vector& x_minus = traj.jump_pairs[size_t(k)].first;
    const Vector& x_plus = traj.jump_pairs[size_t(k)].second;
    Cotangent dN =
        surface_oneform(sys.surfaces[size_t(k)], ChartPoint(x_minus, mid));
    Tangent f0(ChartPoint(x_minus, mid),
               sys.fields[size_t(seg.state_index)](x_minus,
                                                   seg.controls.back()));
    Tangent f1(ChartPoint(x_plus, mid),
               sys.fields[size_t(next.state_index)](x_plus,
                                                    next.controls.front()));
    Matrix S =
        switch_variation_matrix(sys.jumps[size_t(k)], x_minus, dN, f0, f1);
    tail_[size_t(k)] =
        tail_[size_t(k) + 1] * node_to_end_[size_t(k) + 1][0] * S;
  }
}

Vector TerminalVariationMap::to_terminal(int k, size_t i,
                                         const Vector& v) const {
  return tail_[size_t(k)] * (node_to_end_[size_t(k)][i] * v);
}

Vector TerminalVariationMap::pullback_of(int k, size_t i,
                                         const Vector& p_tf) const {
  return node_to_end_[size_t(k)][i].transpose() *
         (tail_[size_t(k)].transpose() * p_tf);
}

ConeReport cone_inequality_check(const HybridSystem& sys,
                                 const HybridTrajectory& traj,
                                 const std::vector<ControlProvider>& controls,
                                 const Vector& p_tf, int n_samples,
                                 std::uint64_t seed) {
  TerminalVariationMap tvm(sys, traj, controls);

  // Covector at each node that realizes <p_tf, to_terminal(., ., v)>.
  std::vector<std::vector<Vector>> node_cov(traj.segments.size());
  for (size_t k = 0; k < traj.segments.size(); ++k) {
    node_cov[k].resize(traj.segments[k].times.size());
    for (size_t i = 0; i < traj.segments[k].times.size(); ++i) {
      node_cov[k][i] = tvm.pullback_of(int(k), i, p_tf);
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int m = sys.control_dim();

  ConeReport report;
  report.min_pairing = std::numeric_limits<double>::infinity();
  report.samples = n_samples;
  double max_abs = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    double t = traj.t0() + (traj.tf() - traj.t0()) * unif(rng);
    int k = 0;
    for (int i = 0; i < int(traj.segments.size()); ++i) {
      if (t >= traj.boundary_times[size_t(i)]) k = i;
    }
    const SegmentPath& seg = traj.segments[size_t(k)];
    auto it = std::lower_bound(seg.times.begin(), seg.times.end(), t);
    size_t node = std::min(size_t(it - seg.times.begin()), seg.times.size() - 1);

    Vector u1(m);
    for (int j = 0; j < m; ++j) {
      double lo = sys.control_bounds[size_t(j)][0];
      double hi = sys.control_bounds[size_t(j)][1];
      u1[j] = lo + (hi - lo) * unif(rng);
    }
    const ControlledField& field = sys.fields[size_t(seg.state_index)];
    Vector elem = field(seg.points[node], u1) -
                  field(seg.points[node], seg.controls[node]);
    double value = node_cov[size_t(k)][node].dot(elem);
    max_abs = std::max(max_abs, std::abs(value));
    if (value < report.min_pairing) {
      report.min_pairing = value;
      report.worst = ConeSample{seg.times[node], k, value};
    }
  }
  report.scale = 1.0 + max_abs;
  return report;
}

// ---------------------------------------------------------------------------
// Verification harness
// ---------------------------------------------------------------------------

namespace {

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double lo,
                     double hi) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Matrix M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) M(i, j) = unif(rng);
  }
  return M;
}

ControlSignal random_piecewise_control(std::mt19937_64& rng, double t0,
                                       double tf, int pieces, double lo,
                                       double hi) {
  std::uniform_real_distribution<double> unif(lo, hi);
  std::vector<double> grid;
  std::vector<Vector> values;
  for (int i = 0; i < pieces; ++i) {
    grid.push_back(t0 + (tf - t0) * double(i) / double(pieces));
    Vector v(1);
    v[0] = unif(rng);
    values.push_back(v);
  }
  return ControlSignal(std::move(grid), std::move(values));
}

JumpMap random_jump(std::mt19937_64& rng, bool nonlinear) {
  if (!nonlinear) {
    Matrix M = Matrix::Identity(2, 2) + random_matrix(rng, 2, 2, -0.3, 0.3);
    Vector c = random_matrix(rng, 2, 1, -0.1, 0.1).col(0);
    return JumpMap::affine(M, c);
  }
  Vector delta = random_matrix(rng, 2, 1, -1.0, 1.0).col(0);
  JumpMap j;
  j.eval = [delta](const Vector& x) -> Vector {
    Vector out(2);
    out[0] = x[0] + 0.2 * std::sin(x[0] + delta[0]);
    out[1] = x[1] + 0.2 * std::sin(x[1] + delta[1]);
    return out;
  };
  j.jac = [delta](const Vector& x) -> Matrix {
    Matrix J = Matrix::Zero(2, 2);
    J(0, 0) = 1.0 + 0.2 * std::cos(x[0] + delta[0]);
    J(1, 1) = 1.0 + 0.2 * std::cos(x[1] + delta[1]);
    return J;
  };
  return j;
}

}  // namespace

OneSwitchInstance make_one_switch_instance(std::uint64_t seed) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + std::uint64_t(attempt));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    OneSwitchInstance inst;
    inst.t0 = 0.0;
    inst.tf = 2.0;

    Matrix A0 = random_matrix(rng, 2, 2, -0.6, 0.6);
    Matrix A1 = random_matrix(rng, 2, 2, -0.6, 0.6);
    Matrix B0 = random_matrix(rng, 2, 1, -1.0, 1.0);
    Matrix B1 = random_matrix(rng, 2, 1, -1.0, 1.0);
    if (B0.norm() < 0.3 || B1.norm() < 0.3) continue;
    B0 /= B0.norm();
    B1 /= B1.norm();

    inst.x0 = random_matrix(rng, 2, 1, -0.5, 0.5).col(0);
    inst.nominal = random_piecewise_control(rng, inst.t0, inst.tf, 8, -1., 1.);

    // Run the pre-switch mode open loop and place the surface where the path
    // crosses it transversally mid-horizon.
    ControlledField f0 = linear_field(A0, B0);
    IntegrateOptions iopts;
    for (double b : inst.nominal.grid()) iopts.control_breakpoints.push_back(b);
    SegmentPath probe = integrate_segment(f0, inst.x0, inst.nominal.provider(),
                                          inst.t0, inst.tf, iopts);
    double t_mid = 0.6 + 0.8 * unif(rng);
    size_t mid_idx = 0;
    for (size_t i = 0; i < probe.times.size(); ++i) {
      if (probe.times[i] <= t_mid) mid_idx = i;
    }
    Vector x_mid = probe.points[mid_idx];

    double phi = 2.0 * M_PI * unif(rng);
    Vector a(2);
    a << std::cos(phi), std::sin(phi);
    double speed = a.dot(f0(x_mid, inst.nominal.value_at(t_mid)));
    if (std::abs(speed) <
        0.1 * f0(x_mid, inst.nominal.value_at(t_mid)).norm()) {
      continue;
    }
    if (speed < 0.0) a = -a;  // crossing goes from negative to positive
    double offset = a.dot(x_mid);

    // Reject paths that already poke above the surface well before t_mid.
    bool early_cross = false;
    for (size_t i = 0; i < mid_idx; ++i) {
      if (probe.times[i] < t_mid - 0.05 && a.dot(probe.points[i]) >= offset) {
        early_cross = true;
        break;
      }
    }
    if (early_cross || a.dot(inst.x0) >= offset - 0.05) continue;

    HybridSystem sys;
    sys.manifold = make_euclidean(2);
    sys.states = {"m0", "m1"};
    sys.fields = {f0, linear_field(A1, B1)};
    sys.surfaces = {affine_surface("s0", a, offset, "m0", "m1")};
    sys.jumps = {random_jump(rng, (seed % 2) == 1)};
    sys.control_bounds = {{-2.0, 2.0}};
    sys.losses = {std::nullopt, std::nullopt};

    Vector c = random_matrix(rng, 2, 1, -1.0, 1.0).col(0);
    Matrix Rq = random_matrix(rng, 2, 2, -0.5, 0.5);
    Matrix Q = 0.5 * Matrix::Identity(2, 2) + Rq.transpose() * Rq;
    sys.terminal_cost.eval = [Q, c](const Vector& x) {
      Vector d = x - c;
      return 0.5 * d.dot(Q * d);
    };
    sys.terminal_cost.grad = [Q, c](const Vector& x) -> Vector {
      return Q * (x - c);
    };

    try {
      inst.traj = simulate_hybrid(sys, inst.nominal, inst.x0, 0, inst.t0,
                                  inst.tf);
    } catch (const Error&) {
      continue;
    }
    double ts = inst.traj.switch_time(0);
    if (ts < 0.3 || ts > 1.7) continue;
    inst.sys = std::move(sys);
    return inst;
  }
  throw Error("failed to draw a one-switch instance for seed " +
              std::to_string(seed));
}

namespace {

double fit_order(const std::vector<double>& epsilons,
                 const std::vector<double>& errors, double floor_value) {
  std::vector<double> lx, ly;
  for (size_t i = 0; i < epsilons.size(); ++i) {
    if (errors[i] > floor_value) {
      lx.push_back(std::log(epsilons[i]));
      ly.push_back(std::log(errors[i]));
    }
  }
  if (lx.size() < 3) return 99.0;  // ladder already at the numeric floor
  double mx = 0, my = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= double(lx.size());
  my /= double(lx.size());
  double num = 0, den = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return den > 0 ? num / den : 0.0;
}

SensitivityRecord finish_record(std::string formula, std::string branch,
                                double formula_scale,
                                const std::vector<double>& epsilons,
                                std::vector<double> errors,
                                const VerifyOptions& opts) {
  SensitivityRecord rec;
  rec.formula = std::move(formula);
  rec.branch = std::move(branch);
  rec.formula_value = formula_scale;
  rec.epsilons = epsilons;
  rec.fd_errors = std::move(errors);
  rec.fitted_order =
      fit_order(epsilons, rec.fd_errors, 1e-10 * (1.0 + std::abs(formula_scale)));
  double term_err = 0.0;
  for (size_t i = 0; i < epsilons.size(); ++i) {
    if (std::abs(epsilons[i] - 1e-4) < 1e-12) term_err = rec.fd_errors[i];
  }
  rec.terminal_rel_error = term_err / std::max(std::abs(formula_scale), 1e-9);
  rec.pass = rec.fitted_order >= opts.min_order &&
             rec.terminal_rel_error <= opts.max_terminal_rel_error;
  return rec;
}

}  // namespace

std::vector<SensitivityRecord> verify_instance(const OneSwitchInstance& inst,
                                               std::uint64_t seed,
                                               const VerifyOptions& opts) {
  const HybridSystem& sys = inst.sys;
  const std::string mid = sys.manifold->name();
  // The nominal run uses the same grid and event tolerance as the perturbed
  // runs below, so localization bias cancels in the difference quotients.
  SimulateOptions nominal_opts;
  nominal_opts.steps_per_segment = opts.steps_per_segment;
  nominal_opts.event.constraint_tol = 1e-13;
  for (double b : inst.nominal.grid()) {
    nominal_opts.control_breakpoints.push_back(b);
  }
  HybridTrajectory traj = simulate_hybrid(sys, inst.nominal, inst.x0, 0,
                                          inst.t0, inst.tf, nominal_opts);
  const SegmentPath& seg0 = traj.segments[0];
  const SegmentPath& seg1 = traj.segments[1];
  const ControlledField& f0 = sys.fields[size_t(seg0.state_index)];
  const ControlledField& f1 = sys.fields[size_t(seg1.state_index)];
  const double ts = traj.switch_time(0);
  const Vector& x_minus = traj.jump_pairs[0].first;
  const Vector& x_plus = traj.jump_pairs[0].second;
  ControlProvider u_prov = inst.nominal.provider();

  std::mt19937_64 rng(seed ^ 0xA5A5A5A5DEADBEEFull);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  Cotangent dN = surface_oneform(sys.surfaces[0], ChartPoint(x_minus, mid));
  Tangent f0_minus(ChartPoint(x_minus, mid),
                   f0(x_minus, seg0.controls.back()));
  Tangent f1_plus(ChartPoint(x_plus, mid), f1(x_plus, seg1.controls.front()));

  // Needle anchor: a grid node comfortably inside the first segment.
  std::vector<double> candidates;
  for (double t : seg0.times) {
    if (t > inst.t0 + 0.25 && t < ts - 0.25) candidates.push_back(t);
  }
  if (candidates.empty()) throw Error("no usable needle anchor");
  double t1 = 0.0;
  Vector u1(1);
  Tangent w_elem, w_s;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 200) throw Error("no informative needle found");
    t1 = candidates[size_t(rng() % candidates.size())];
    u1[0] = unif(rng);
    Vector x_t1 = trajectory_eval(sys, traj, {u_prov, u_prov}, t1);
    w_elem = elementary_perturbation(f0, ChartPoint(x_t1, mid), u1,
                                     inst.nominal.value_at(t1));
    if (w_elem.components.norm() < 0.1) continue;
    w_s = pushforward(seg0, f0, u_prov, w_elem, t1, ts);
    double align = std::abs(dN.components.dot(w_s.components)) /
                   (dN.components.norm() * w_s.components.norm() + 1e-300);
    if (align > 0.05) break;
  }

  double dts = switching_time_derivative(dN, f0_minus, w_s);
  Tangent v_s = propagate_through_switch(w_s, dts, sys.jumps[0], f0_minus,
                                         f1_plus);
  Tangent v_tf = pushforward(seg1, f1, u_prov, v_s, ts, inst.tf);
  Cotangent dh = terminal_covector(sys.terminal_cost,
                                   ChartPoint(traj.final_state(), mid));
  double cost_dir = pairing(dh, v_tf);

  const Vector u_hold_minus = seg0.controls.back();
  const Vector u_hold_plus = inst.nominal.value_at(ts);

  std::vector<double> err_elem, err_tsdot, err_var, err_cost;
  for (double eps : opts.epsilons) {
    NeedleSpec spec;
    spec.t1 = t1;
    spec.u1 = u1;
    // Pre-switch mode: needle plus the pre-switch value held past ts.
    ControlSignal u0_sig = perturb_control(inst.nominal, spec, eps);
    u0_sig.override_interval(ts, inst.tf + 1.0, u_hold_minus);
    // Post-switch mode: the post-switch value held before ts.
    ControlSignal u1_sig = inst.nominal;
    u1_sig.override_interval(inst.t0 - 1.0, ts, u_hold_plus);

    SimulateOptions sopts;
    sopts.steps_per_segment = opts.steps_per_segment;
    sopts.event.constraint_tol = 1e-13;
    for (double b : u0_sig.grid()) sopts.control_breakpoints.push_back(b);
    for (double b : u1_sig.grid()) sopts.control_breakpoints.push_back(b);
    std::vector<ControlProvider> pert = {u0_sig.provider(), u1_sig.provider()};
    HybridTrajectory traj_eps = simulate_hybrid(sys, pert, inst.x0, 0, inst.t0,
                                                inst.tf, sopts);
    double ts_eps = traj_eps.switch_time(0);

    Vector xe_t1 = trajectory_eval(sys, traj_eps, pert, t1);
    Vector xn_t1 = trajectory_eval(sys, traj, {u_prov, u_prov}, t1);
    err_elem.push_back(
        ((xe_t1 - xn_t1) / eps - w_elem.components).norm());

    err_tsdot.push_back(std::abs((ts_eps - ts) / eps - dts));

    double t_star = std::max(ts, ts_eps);
    Vector xe = trajectory_eval(sys, traj_eps, pert, t_star);
    Vector xn = trajectory_eval(sys, traj, {u_prov, u_prov}, t_star);
    err_var.push_back(((xe - xn) / eps - v_s.components).norm());

    double h_eps = sys.terminal_cost(traj_eps.final_state());
    double h_nom = sys.terminal_cost(traj.final_state());
    err_cost.push_back(std::abs((h_eps - h_nom) / eps - cost_dir));
  }

  std::string branch = dts >= 0.0 ? "late" : "early";
  std::vector<SensitivityRecord> records;
  records.push_back(finish_record("elementary_perturbation", "-",
                                  w_elem.components.norm(), opts.epsilons,
                                  std::move(err_elem), opts));
  records.push_back(finish_record("switching_time_derivative", branch, dts,
                                  opts.epsilons, std::move(err_tsdot), opts));
  records.push_back(finish_record("switch_state_variation", branch,
                                  v_s.components.norm(), opts.epsilons,
                                  std::move(err_var), opts));
  records.push_back(finish_record("terminal_cost_direction", branch, cost_dir,
                                  opts.epsilons, std::move(err_cost), opts));
  return records;
}

}  // namespace hmp
