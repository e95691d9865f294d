#include "hmp/system.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

namespace {
constexpr double kJacFdStep = 1e-6;

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f,
                   const Vector& x) {
  Vector f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += kJacFdStep;
    xm[i] -= kJacFdStep;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * kJacFdStep);
  }
  return J;
}
}  // namespace

Matrix ControlledField::jacobian_x(const Vector& x, const Vector& u) const {
  if (jac_x) return jac_x(x, u);
  if (linear) return linear->A;
  return fd_jacobian([this, &u](const Vector& y) { return eval(y, u); }, x);
}

ControlledField linear_field(const Matrix& A, const Matrix& B) {
  ControlledField f;
  f.control_dim = int(B.cols());
  f.eval = [A, B](const Vector& x, const Vector& u) -> Vector {
    return A * x + B * u;
  };
  f.jac_x = [A](const Vector&, const Vector&) { return A; };
  f.linear = LinearDynamics{A, B};
  return f;
}

Matrix JumpMap::jacobian(const Vector& x) const {
  if (jac) return jac(x);
  return fd_jacobian(eval, x);
}

JumpMap JumpMap::identity() {
  JumpMap j;
  j.eval = [](const Vector& x) { return x; };
  j.jac = [](const Vector& x) -> Matrix {
    return Matrix::Identity(x.size(), x.size());
  };
  return j;
}

JumpMap JumpMap::affine(const Matrix& M, const Vector& c) {
  JumpMap j;
  j.eval = [M, c](const Vector& x) -> Vector { return M * x + c; };
  j.jac = [M](const Vector&) { return M; };
  return j;
}

Vector Loss::gradient_x(const Vector& x, const Vector& u) const {
  if (grad_x) return grad_x(x, u);
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += kJacFdStep;
    xm[i] -= kJacFdStep;
    g[i] = (eval(xp, u) - eval(xm, u)) / (2.0 * kJacFdStep);
  }
  return g;
}

Loss quadratic_control_loss() {
  Loss l;
  l.is_quadratic_control = true;
  l.eval = [](const Vector&, const Vector& u) { return 0.5 * u.squaredNorm(); };
  l.grad_x = [](const Vector& x, const Vector&) -> Vector {
    return Vector::Zero(x.size());
  };
  return l;
}

Vector TerminalCost::gradient(const Vector& x) const {
  if (grad) return grad(x);
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += kJacFdStep;
    xm[i] -= kJacFdStep;
    g[i] = (eval(xp) - eval(xm)) / (2.0 * kJacFdStep);
  }
  return g;
}

TerminalCost TerminalCost::zero(int dim) {
  TerminalCost h;
  h.eval = [](const Vector&) { return 0.0; };
  h.grad = [dim](const Vector&) -> Vector { return Vector::Zero(dim); };
  return h;
}

int HybridSystem::control_dim() const {
  return fields.empty() ? 0 : fields.front().control_dim;
}

int HybridSystem::state_index(const std::string& id) const {
  for (size_t i = 0; i < states.size(); ++i) {
    if (states[i] == id) return int(i);
  }
  throw Error("unknown discrete state '" + id + "'");
}

bool HybridSystem::has_losses() const {
  for (const auto& l : losses) {
    if (l) return true;
  }
  return false;
}

const Loss* HybridSystem::loss(int state) const {
  if (state < 0 || size_t(state) >= losses.size()) return nullptr;
  return losses[size_t(state)] ? &*losses[size_t(state)] : nullptr;
}

void HybridSystem::check_consistent() const {
  if (!manifold) throw Error("hybrid system has no manifold");
  if (fields.size() != states.size()) {
    throw Error("one controlled field required per discrete state");
  }
  if (jumps.size() != surfaces.size()) {
    throw Error("one jump map required per switching surface");
  }
  if (losses.size() != states.size()) {
    throw Error("losses list must match the discrete-state list");
  }
  for (const auto& s : surfaces) {
    state_index(s.from_state);
    state_index(s.to_state);
  }
}

void HybridTrajectory::check_jump_consistency(const HybridSystem& sys,
                                              double tol) const {
  for (int k = 0; k < switch_count(); ++k) {
    Vector mapped = sys.jumps[size_t(k)](jump_pairs[size_t(k)].first);
    double err = (mapped - jump_pairs[size_t(k)].second).norm();
    if (err > tol) {
      std::ostringstream msg;
      msg << "jump consistency violated at switch " << k << " (error " << err
          << ")";
      throw Error(msg.str());
    }
  }
}

HybridSystem mayer_lift(const HybridSystem& sys) {
  sys.check_consistent();
  const int n = sys.dim();

  // Lifted manifold: original chart times the cost accumulator line.
  ManifoldPtr base = sys.manifold;
  auto lifted_manifold = std::make_shared<RiemannianManifold>(
      base->name() + "_x_R", n + 1, [base, n](const Vector& x) -> Matrix {
        Matrix g = Matrix::Identity(n + 1, n + 1);
        g.topLeftCorner(n, n) = base->metric_at(ChartPoint(x.head(n), base->name()));
        return g;
      });
  for (int i = 0; i < n; ++i) {
    if (base->periods()[size_t(i)]) {
      lifted_manifold->set_period(i, *base->periods()[size_t(i)]);
    }
  }

  HybridSystem out;
  out.manifold = lifted_manifold;
  out.states = sys.states;
  out.control_bounds = sys.control_bounds;

  for (size_t q = 0; q < sys.states.size(); ++q) {
    const ControlledField& f = sys.fields[q];
    const Loss* l = sys.loss(int(q));
    ControlledField lifted;
    lifted.control_dim = f.control_dim;
    lifted.eval = [f, l, n](const Vector& xhat, const Vector& u) -> Vector {
      Vector x = xhat.head(n);
      Vector out_v(n + 1);
      out_v.head(n) = f.eval(x, u);
      out_v[n] = l ? l->eval(x, u) : 0.0;
      return out_v;
    };
    lifted.jac_x = [f, l, n](const Vector& xhat, const Vector& u) -> Matrix {
      Vector x = xhat.head(n);
      Matrix J = Matrix::Zero(n + 1, n + 1);
      J.topLeftCorner(n, n) = f.jacobian_x(x, u);
      if (l) J.row(n).head(n) = l->gradient_x(x, u).transpose();
      return J;
    };
    out.fields.push_back(std::move(lifted));
    out.losses.emplace_back(std::nullopt);
  }

  for (size_t k = 0; k < sys.surfaces.size(); ++k) {
    const SwitchingSurface& s = sys.surfaces[k];
    SwitchingSurface lifted = s;  // keeps id/states/orientation/axis
    lifted.constraint = [s, n](const Vector& xhat) {
      return s.constraint(xhat.head(n));
    };
    lifted.gradient = [s, n](const Vector& xhat) -> Vector {
      Vector g = Vector::Zero(n + 1);
      g.head(n) = s.gradient_at(xhat.head(n));
      return g;
    };
    out.surfaces.push_back(std::move(lifted));

    const JumpMap& j = sys.jumps[k];
    JumpMap lj;
    lj.eval = [j, n](const Vector& xhat) -> Vector {
      Vector out_v(n + 1);
      out_v.head(n) = j.eval(xhat.head(n));
      out_v[n] = xhat[n];
      return out_v;
    };
    lj.jac = [j, n](const Vector& xhat) -> Matrix {
      Matrix J = Matrix::Zero(n + 1, n + 1);
      J.topLeftCorner(n, n) = j.jacobian(xhat.head(n));
      J(n, n) = 1.0;
      return J;
    };
    out.jumps.push_back(std::move(lj));
  }

  TerminalCost h = sys.terminal_cost;
  out.terminal_cost.eval = [h, n](const Vector& xhat) {
    return xhat[n] + h.eval(xhat.head(n));
  };
  out.terminal_cost.grad = [h, n](const Vector& xhat) -> Vector {
    Vector g(n + 1);
    g.head(n) = h.gradient(xhat.head(n));
    g[n] = 1.0;
    return g;
  };
  return out;
}

ValidationReport validate(const HybridSystem& sys, const ChartPoint& x0,
                          int q0) {
  ValidationReport report;
  try {
    sys.check_consistent();
  } catch (const Error& e) {
    report.violations.emplace_back(e.what());
    return report;
  }
  if (q0 < 0 || size_t(q0) >= sys.states.size()) {
    report.violations.push_back("initial discrete state out of range");
    return report;
  }

  for (const auto& s : sys.surfaces) {
    if (std::abs(s.value(x0.coords)) <= 1e-8) {
      report.violations.push_back("initial state lies on surface '" + s.id +
                                  "'");
    }
  }

  // Probe surface gradients and the metric near the initial state.
  std::mt19937_64 rng(20250810u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int probe = 0; probe < 32; ++probe) {
    Vector x = x0.coords;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += gauss(rng);
    for (const auto& s : sys.surfaces) {
      if (s.gradient_at(x).norm() <= 1e-10) {
        report.violations.push_back("surface '" + s.id +
                                    "' has vanishing gradient near sample");
        break;
      }
    }
    try {
      (void)sys.manifold->metric_at(ChartPoint(x, sys.manifold->name()));
    } catch (const MetricDegeneracyError& e) {
      report.violations.emplace_back(e.what());
      break;
    }
  }

  for (size_t q = 0; q < sys.states.size(); ++q) {
    const Loss* l = sys.loss(int(q));
    if (!l) continue;
    Vector u0 = Vector::Zero(sys.control_dim());
    if (l->eval(x0.coords, u0) < 0.0) {
      report.violations.push_back("loss of state '" + sys.states[q] +
                                  "' negative at the initial state");
    }
  }
  if (sys.terminal_cost.eval && sys.terminal_cost(x0.coords) < 0.0) {
    report.violations.push_back("terminal cost negative at the initial state");
  }
  return report;
}

}  // namespace hmp
