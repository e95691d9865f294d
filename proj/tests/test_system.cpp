#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hmp/errors.hpp"
#include "hmp/flow.hpp"
#include "hmp/system.hpp"
#include "oracles.hpp"

using namespace hmp;

TEST_CASE("control signal is piecewise constant from the left") {
  ControlSignal u({0.0, 1.0, 2.0},
                  {(Vector(1) << 1.0).finished(), (Vector(1) << 2.0).finished(),
                   (Vector(1) << 3.0).finished()});
  CHECK(u.value_at(-0.5)[0] == 1.0);
  CHECK(u.value_at(0.0)[0] == 1.0);
  CHECK(u.value_at(0.999)[0] == 1.0);
  CHECK(u.value_at(1.0)[0] == 2.0);
  CHECK(u.value_at(5.0)[0] == 3.0);

  u.override_interval(0.5, 1.5, (Vector(1) << 9.0).finished());
  CHECK(u.value_at(0.49)[0] == 1.0);
  CHECK(u.value_at(0.5)[0] == 9.0);
  CHECK(u.value_at(1.49)[0] == 9.0);
  CHECK(u.value_at(1.5)[0] == 2.0);

  CHECK_THROWS(ControlSignal({1.0, 1.0}, {(Vector(1) << 0.0).finished(),
                                          (Vector(1) << 0.0).finished()}));
}

TEST_CASE("analytic jacobians agree with finite differences") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix A = oracles::random_matrix(rng, 3, 3, -1.0, 1.0);
    Matrix B = oracles::random_matrix(rng, 3, 2, -1.0, 1.0);
    ControlledField f = linear_field(A, B);
    Vector x = oracles::random_vector(rng, 3, -2.0, 2.0);
    Vector u = oracles::random_vector(rng, 2, -1.0, 1.0);
    ControlledField fd_only{f.control_dim, f.eval, nullptr, std::nullopt};
    Matrix J_fd = fd_only.jacobian_x(x, u);
    Matrix J = f.jacobian_x(x, u);
    double scale = std::max(1e-7, 1e-4 * J.norm());
    CHECK((J - J_fd).norm() < scale);
  }
}

TEST_CASE("jump maps: identity, affine, finite-difference fallback") {
  CHECK((JumpMap::identity().jacobian(Vector::Zero(3)) - Matrix::Identity(3, 3))
            .norm() == 0.0);
  std::mt19937_64 rng(7);
  Matrix M = oracles::random_matrix(rng, 2, 2, -1.0, 1.0);
  Vector c = oracles::random_vector(rng, 2, -1.0, 1.0);
  JumpMap aff = JumpMap::affine(M, c);
  CHECK((aff.jacobian(Vector::Ones(2)) - M).norm() == 0.0);

  JumpMap soft;
  soft.eval = [](const Vector& x) -> Vector {
    Vector out(2);
    out[0] = x[0] + 0.3 * std::sin(x[1]);
    out[1] = x[1];
    return out;
  };
  Matrix J = soft.jacobian((Vector(2) << 0.2, 0.7).finished());
  CHECK(J(0, 1) == doctest::Approx(0.3 * std::cos(0.7)).epsilon(1e-7));
}

namespace {
HybridSystem one_mode_bolza() {
  HybridSystem sys;
  sys.manifold = make_euclidean(2);
  sys.states = {"m"};
  Matrix A(2, 2), B(2, 1);
  A << 0.0, 1.0, -0.5, -0.1;
  B << 0.0, 1.0;
  sys.fields = {linear_field(A, B)};
  sys.losses = {quadratic_control_loss()};
  sys.control_bounds = {{-5.0, 5.0}};
  sys.terminal_cost = TerminalCost::zero(2);
  return sys;
}
}  // namespace

TEST_CASE("mayer lift: dimensions, dynamics, cylindrical surfaces") {
  HybridSystem sys = fixtures::torus_six_mode();
  HybridSystem lifted = mayer_lift(sys);
  CHECK(lifted.dim() == 3);
  CHECK_FALSE(lifted.has_losses());

  Vector xhat = (Vector(3) << 0.2, -0.1, 5.0).finished();
  Vector u = (Vector(1) << 2.0).finished();
  Vector v = lifted.fields[0](xhat, u);
  CHECK(v[0] == doctest::Approx(1.5 * 0.2 + 2.0));
  CHECK(v[1] == doctest::Approx(-0.1 + 2.0));
  CHECK(v[2] == doctest::Approx(0.5 * 4.0));  // accumulator rate = |u|^2/2

  // surfaces ignore the accumulator coordinate
  Vector xhat2 = xhat;
  xhat2[2] = -77.0;
  CHECK(lifted.surfaces[1].value(xhat) ==
        doctest::Approx(lifted.surfaces[1].value(xhat2)));
  Vector g = lifted.surfaces[1].gradient_at(xhat);
  CHECK(g[2] == 0.0);

  // terminal cost is accumulator plus the base terminal cost
  CHECK(lifted.terminal_cost(xhat) == doctest::Approx(5.0));
  Vector grad = lifted.terminal_cost.gradient(xhat);
  CHECK(grad[2] == 1.0);

  // jumps act as the identity on the accumulator
  Vector jumped = lifted.jumps[0](xhat);
  CHECK(jumped[2] == 5.0);
}

TEST_CASE("mayer lift with zero losses keeps the accumulator at zero") {
  HybridSystem sys = one_mode_bolza();
  sys.losses = {std::nullopt};
  HybridSystem lifted = mayer_lift(sys);
  Vector xhat0 = Vector::Zero(3);
  ControlSignal u = ControlSignal::constant((Vector(1) << 1.0).finished(), 0, 1);
  SegmentPath seg = integrate_segment(lifted.fields[0], xhat0, u, 0.0, 1.0);
  CHECK(std::abs(seg.points.back()[2]) < 1e-14);
}

TEST_CASE("lifted cost equals quadrature of the running cost") {
  HybridSystem sys = one_mode_bolza();
  HybridSystem lifted = mayer_lift(sys);
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> grid;
    std::vector<Vector> vals;
    for (int i = 0; i < 6; ++i) {
      grid.push_back(0.4 * i);
      vals.push_back(oracles::random_vector(rng, 1, -2.0, 2.0));
    }
    ControlSignal u(grid, vals);
    Vector x0hat = Vector::Zero(3);
    x0hat.head(2) = oracles::random_vector(rng, 2, -1.0, 1.0);
    SegmentPath seg = integrate_segment(lifted.fields[0], x0hat, u, 0.0, 2.0);
    double lifted_cost = lifted.terminal_cost(seg.points.back());

    // independent route: simulate the base system and integrate the loss by
    // trapezoid quadrature
    SegmentPath base = integrate_segment(sys.fields[0], x0hat.head(2), u, 0.0, 2.0);
    base.state_index = 0;
    double quad = oracles::trapezoid(
        base, [&](double, const Vector& x, const Vector& uu) {
          return sys.losses[0]->eval(x, uu);
        });
    CHECK(lifted_cost == doctest::Approx(quad).epsilon(1e-6));
  }
}

TEST_CASE("mayer lift preserves trajectories node for node") {
  HybridSystem sys = fixtures::torus_six_mode();
  HybridSystem lifted = mayer_lift(sys);
  ControlSignal u = ControlSignal::constant((Vector(1) << 1.0).finished(), 0, 8);
  SimulateOptions opts;
  opts.steps_per_segment = 2048;

  HybridTrajectory base =
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 8.0, opts);
  Vector x0hat = Vector::Zero(3);
  x0hat.head(2) = fixtures::torus_x0();
  HybridTrajectory lift = simulate_hybrid(lifted, u, x0hat, 0, 0.0, 8.0, opts);

  REQUIRE(base.segments.size() == lift.segments.size());
  for (size_t k = 0; k < base.segments.size(); ++k) {
    REQUIRE(base.segments[k].times.size() == lift.segments[k].times.size());
    for (size_t i = 0; i < base.segments[k].times.size(); ++i) {
      CHECK((base.segments[k].points[i] - lift.segments[k].points[i].head(2))
                .norm() < 1e-10);
    }
  }
}

TEST_CASE("validate: clean config, surface hit, empty schedule") {
  HybridSystem sys = fixtures::torus_six_mode();
  ChartPoint x0(fixtures::torus_x0(), "torus");
  CHECK(validate(sys, x0, 0).ok());

  ChartPoint on_surface((Vector(2) << 0.0, 0.4).finished(), "torus");
  ValidationReport bad = validate(sys, on_surface, 0);
  CHECK_FALSE(bad.ok());

  HybridSystem smooth = sys;
  smooth.surfaces.clear();
  smooth.jumps.clear();
  CHECK(validate(smooth, on_surface, 0).ok());
}

TEST_CASE("jump consistency holds on simulated trajectories") {
  HybridSystem sys = fixtures::torus_six_mode();
  ControlSignal u = ControlSignal::constant((Vector(1) << 1.0).finished(), 0, 8);
  HybridTrajectory traj =
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 8.0);
  CHECK(traj.switch_count() == 5);
  CHECK_NOTHROW(traj.check_jump_consistency(sys));
}
