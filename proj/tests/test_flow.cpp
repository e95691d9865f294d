#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hmp/errors.hpp"
#include "hmp/flow.hpp"
#include "oracles.hpp"

using namespace hmp;

namespace {

ControlledField pendulum_field(double damping = 0.2) {
  ControlledField f;
  f.control_dim = 1;
  f.eval = [damping](const Vector& x, const Vector& u) -> Vector {
    Vector out(2);
    out[0] = x[1];
    out[1] = -std::sin(x[0]) - damping * x[1] + u[0];
    return out;
  };
  f.jac_x = [damping](const Vector& x, const Vector&) -> Matrix {
    Matrix J(2, 2);
    J << 0.0, 1.0, -std::cos(x[0]), -damping;
    return J;
  };
  return f;
}

Vector vec1(double v) { return (Vector(1) << v).finished(); }

}  // namespace

TEST_CASE("zero field gives a constant path") {
  ControlledField zero;
  zero.control_dim = 1;
  zero.eval = [](const Vector& x, const Vector&) {
    return Vector::Zero(x.size()).eval();
  };
  SegmentPath seg = integrate_segment(
      zero, (Vector(2) << 0.4, -0.7).finished(),
      ControlSignal::constant(vec1(0.0), 0, 1), 0.0, 1.0);
  for (const auto& p : seg.points) {
    CHECK((p - (Vector(2) << 0.4, -0.7).finished()).norm() == 0.0);
  }
}

TEST_CASE("uncontrolled first torus mode follows the exponential solution") {
  HybridSystem sys = fixtures::torus_six_mode();
  Vector x0 = fixtures::torus_x0();
  SegmentPath seg = integrate_segment(
      sys.fields[0], x0, ControlSignal::constant(vec1(0.0), 0, 0.5), 0.0, 0.5);
  Vector expected(2);
  expected << -0.3 * std::exp(1.5 * 0.5), -0.3 * std::exp(0.5);
  CHECK((seg.points.back() - expected).norm() < 1e-9);
}

TEST_CASE("halving the step reduces the terminal error about sixteenfold") {
  ControlledField f = pendulum_field();
  Vector x0 = (Vector(2) << 1.1, -0.4).finished();
  ControlSignal u = ControlSignal::constant(vec1(0.3), 0, 2);
  IntegrateOptions coarse, fine, reference;
  coarse.steps = 20;
  fine.steps = 40;
  reference.steps = 4096;
  Vector ref = integrate_segment(f, x0, u, 0.0, 2.0, reference).points.back();
  double err_coarse =
      (integrate_segment(f, x0, u, 0.0, 2.0, coarse).points.back() - ref).norm();
  double err_fine =
      (integrate_segment(f, x0, u, 0.0, 2.0, fine).points.back() - ref).norm();
  double ratio = err_coarse / err_fine;
  CHECK(ratio > 10.0);
  CHECK(ratio < 24.0);
}

TEST_CASE("blow-up reports the last good time") {
  ControlledField f;
  f.control_dim = 1;
  f.eval = [](const Vector& x, const Vector&) -> Vector {
    Vector out(1);
    out[0] = x[0] * x[0];  // finite-time escape from x0 = 1 at t = 1
    return out;
  };
  CHECK_THROWS_AS(integrate_segment(f, Vector::Ones(1),
                                    ControlSignal::constant(vec1(0.0), 0, 2),
                                    0.0, 2.0),
                  BlowUpError);
}

TEST_CASE("event detection matches the closed-form crossing time") {
  HybridSystem sys = fixtures::torus_six_mode();
  Vector x0 = fixtures::torus_x0();
  ControlSignal u = ControlSignal::constant(vec1(1.0), 0, 8);
  SegmentPath seg = integrate_segment(sys.fields[0], x0, u, 0.0, 8.0);
  std::optional<SwitchEvent> ev =
      detect_switch(seg, sys.fields[0], u.provider(), sys.surfaces[0]);
  REQUIRE(ev.has_value());
  // zeta(t) = (zeta0 + 2/3) e^{1.5 t} - 2/3 crosses zero at ln(20/11)/1.5
  double t_closed = std::log(20.0 / 11.0) / 1.5;
  CHECK(ev->time == doctest::Approx(t_closed).epsilon(1e-9));
  CHECK(std::abs(sys.surfaces[0].value(ev->x_minus)) < 1e-10);
  CHECK(ev->transversality > 0.0);
}

TEST_CASE("no event on a path that stays on one side") {
  HybridSystem sys = fixtures::torus_six_mode();
  ControlSignal u = ControlSignal::constant(vec1(0.0), 0, 2);
  SegmentPath seg =
      integrate_segment(sys.fields[0], fixtures::torus_x0(), u, 0.0, 2.0);
  CHECK_FALSE(
      detect_switch(seg, sys.fields[0], u.provider(), sys.surfaces[0]).has_value());
}

TEST_CASE("tangential contact aborts the trajectory") {
  // xdot = (x2, u) with u = 1 from (0.5, -1): x1(t) = 0.5 - t + t^2/2 touches
  // zero at t = 1 with zero crossing speed.
  Matrix A(2, 2), B(2, 1);
  A << 0.0, 1.0, 0.0, 0.0;
  B << 0.0, 1.0;
  ControlledField f = linear_field(A, B);
  ControlSignal u = ControlSignal::constant(vec1(1.0), 0, 2);
  SegmentPath seg = integrate_segment(
      f, (Vector(2) << 0.5, -1.0).finished(), u, 0.0, 2.0);
  SwitchingSurface s = axis_surface("graze", 0, 0.0, "a", "b", -1.0);
  CHECK_THROWS_AS(detect_switch(seg, f, u.provider(), s),
                  TransversalityError);
}

TEST_CASE("event times are stable under grid refinement") {
  HybridSystem sys = fixtures::torus_six_mode();
  ControlSignal u = ControlSignal::constant(vec1(1.0), 0, 8);
  IntegrateOptions a, b;
  a.steps = 1024;
  b.steps = 2048;
  SegmentPath sa =
      integrate_segment(sys.fields[0], fixtures::torus_x0(), u, 0.0, 8.0, a);
  SegmentPath sb =
      integrate_segment(sys.fields[0], fixtures::torus_x0(), u, 0.0, 8.0, b);
  double ta =
      detect_switch(sa, sys.fields[0], u.provider(), sys.surfaces[0])->time;
  double tb =
      detect_switch(sb, sys.fields[0], u.provider(), sys.surfaces[0])->time;
  CHECK(std::abs(ta - tb) < 1e-8);
}

TEST_CASE("hybrid simulation: no surfaces reduces to one segment") {
  HybridSystem sys = fixtures::torus_six_mode();
  sys.surfaces.clear();
  sys.jumps.clear();
  ControlSignal u = ControlSignal::constant(vec1(0.3), 0, 2);
  HybridTrajectory traj =
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 2.0);
  CHECK(traj.segments.size() == 1);
  CHECK(traj.switch_count() == 0);
  SegmentPath direct =
      integrate_segment(sys.fields[0], fixtures::torus_x0(), u, 0.0, 2.0);
  CHECK((traj.final_state() - direct.points.back()).norm() == 0.0);
}

TEST_CASE("hybrid simulation: scheduled five-event run with identity jumps") {
  HybridSystem sys = fixtures::torus_six_mode();
  ControlSignal u = ControlSignal::constant(vec1(1.0), 0, 8);
  HybridTrajectory traj =
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 8.0);
  CHECK(traj.switch_count() == 5);
  for (int k = 0; k < 5; ++k) {
    const auto& pair = traj.jump_pairs[size_t(k)];
    CHECK((pair.first - pair.second).norm() == 0.0);  // identity jumps
    CHECK(std::abs(sys.surfaces[size_t(k)].value(pair.first)) < 1e-10);
    CHECK(traj.switch_time(k) < traj.switch_time(k) + 1.0);
  }
  for (int k = 0; k + 1 < 5; ++k) {
    CHECK(traj.switch_time(k) < traj.switch_time(k + 1));
  }
}

TEST_CASE("unreachable scheduled surface raises the incomplete error") {
  HybridSystem sys = fixtures::torus_six_mode();
  ControlSignal u = ControlSignal::constant(vec1(0.0), 0, 2);
  CHECK_THROWS_AS(
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 2.0),
      IncompleteScheduleError);
}

TEST_CASE("pushforward: linearity, constant fields, matrix exponential") {
  std::mt19937_64 rng(31);
  Matrix A = oracles::random_matrix(rng, 2, 2, -1.0, 1.0);
  Matrix B = oracles::random_matrix(rng, 2, 1, -1.0, 1.0);
  ControlledField f = linear_field(A, B);
  ControlSignal u = ControlSignal::constant(vec1(0.4), 0, 1.5);
  Vector x0 = oracles::random_vector(rng, 2, -1.0, 1.0);
  SegmentPath seg = integrate_segment(f, x0, u, 0.0, 1.5);
  ChartPoint base(x0, "euclidean2");

  Tangent zero = pushforward(seg, f, u.provider(),
                             Tangent(base, Vector::Zero(2)), 0.0, 1.5);
  CHECK(zero.components.norm() == 0.0);

  Vector v0 = oracles::random_vector(rng, 2, -1.0, 1.0);
  Tangent moved =
      pushforward(seg, f, u.provider(), Tangent(base, v0), 0.0, 1.5);
  Vector expected = oracles::expm(A * 1.5) * v0;
  CHECK((moved.components - expected).norm() <
        1e-6 + 1e-3 * expected.norm());

  ControlledField constant;
  constant.control_dim = 1;
  constant.eval = [](const Vector&, const Vector&) {
    return (Vector(2) << 1.0, -2.0).finished();
  };
  SegmentPath cseg = integrate_segment(constant, x0, u, 0.0, 1.5);
  Tangent frozen =
      pushforward(cseg, constant, u.provider(), Tangent(base, v0), 0.0, 1.5);
  CHECK((frozen.components - v0).norm() < 1e-12);
}

TEST_CASE("pushforward agrees with the finite-difference flow derivative") {
  ControlledField f = pendulum_field();
  ControlSignal u = ControlSignal::constant(vec1(0.2), 0, 1.2);
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    Vector x0 = oracles::random_vector(rng, 2, -1.0, 1.0);
    Vector dir = oracles::random_vector(rng, 2, -1.0, 1.0);
    dir /= dir.norm();
    SegmentPath seg = integrate_segment(f, x0, u, 0.0, 1.2);
    Tangent v = pushforward(seg, f, u.provider(),
                            Tangent(ChartPoint(x0, "e2"), dir), 0.0, 1.2);
    const double delta = 1e-5;
    Vector xp = integrate_segment(f, x0 + delta * dir, u, 0.0, 1.2).points.back();
    Vector xm = integrate_segment(f, x0 - delta * dir, u, 0.0, 1.2).points.back();
    Vector fd = (xp - xm) / (2.0 * delta);
    CHECK((fd - v.components).norm() < 1e-6 + 1e-3 * fd.norm());
  }
}

TEST_CASE("pullback matches the transposed matrix exponential") {
  std::mt19937_64 rng(35);
  Matrix A = oracles::random_matrix(rng, 2, 2, -1.0, 1.0);
  Matrix B = oracles::random_matrix(rng, 2, 1, -1.0, 1.0);
  ControlledField f = linear_field(A, B);
  ControlSignal u = ControlSignal::constant(vec1(-0.1), 0, 1.0);
  Vector x0 = oracles::random_vector(rng, 2, -1.0, 1.0);
  SegmentPath seg = integrate_segment(f, x0, u, 0.0, 1.0);

  Cotangent zero = pullback(seg, f, u.provider(),
                            Cotangent(ChartPoint(x0, "e2"), Vector::Zero(2)),
                            1.0, 0.0);
  CHECK(zero.components.norm() == 0.0);

  Vector pT = oracles::random_vector(rng, 2, -1.0, 1.0);
  Cotangent moved = pullback(
      seg, f, u.provider(),
      Cotangent(ChartPoint(seg.points.back(), "e2"), pT), 1.0, 0.0);
  Vector expected = oracles::expm(A.transpose() * 1.0) * pT;
  CHECK((moved.components - expected).norm() < 1e-6 + 1e-4 * expected.norm());
}

TEST_CASE("pairing of transported covectors and tangents is conserved") {
  std::mt19937_64 rng(37);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    ControlledField f;
    if (trial % 2 == 0) {
      Matrix A = oracles::random_matrix(rng, 2, 2, -1.2, 1.2);
      Matrix B = oracles::random_matrix(rng, 2, 1, -1.0, 1.0);
      f = linear_field(A, B);
    } else {
      f = pendulum_field(0.1 + 0.3 * double(trial) / 100.0);
    }
    double span = 0.5 + (trial % 5) * 0.3;
    ControlSignal u = ControlSignal::constant(
        vec1(-0.5 + 0.01 * trial), 0, span);
    Vector x0 = oracles::random_vector(rng, 2, -1.0, 1.0);
    SegmentPath seg = integrate_segment(f, x0, u, 0.0, span);

    Vector v0 = oracles::random_vector(rng, 2, -1.0, 1.0);
    Vector pT = oracles::random_vector(rng, 2, -1.0, 1.0);
    std::vector<Vector> vs = pushforward_path(seg, f, u.provider(), v0);
    std::vector<Vector> ps = pullback_path(seg, f, u.provider(), pT);
    double first = ps[0].dot(vs[0]);
    for (size_t i = 0; i < vs.size(); ++i) {
      double pv = ps[i].dot(vs[i]);
      CHECK(std::abs(pv - first) < 1e-7 * (1.0 + std::abs(pv)));
    }
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("transport operator satisfies the cocycle property") {
  ControlledField f = pendulum_field();
  ControlSignal u = ControlSignal::constant(vec1(0.15), 0, 1.5);
  Vector x0 = (Vector(2) << 0.4, 0.1).finished();
  SegmentPath seg = integrate_segment(f, x0, u, 0.0, 1.5);
  TransportOperator op(seg, f, u.provider());
  Matrix full = op.matrix(1.5, 0.0);
  Matrix first = op.matrix(0.6, 0.0);
  Matrix second = op.matrix(1.5, 0.6);
  CHECK((second * first - full).norm() < 1e-8);
  CHECK((op.matrix(0.7, 0.7) - Matrix::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("trajectory evaluation is exact at nodes and accurate between") {
  HybridSystem sys = fixtures::torus_six_mode();
  ControlSignal u = ControlSignal::constant(vec1(1.0), 0, 8);
  SimulateOptions opts;
  opts.steps_per_segment = 512;
  HybridTrajectory traj =
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 8.0, opts);
  std::vector<ControlProvider> prov(6, u.provider());

  const SegmentPath& seg = traj.segments[2];
  size_t mid = seg.times.size() / 2;
  CHECK((trajectory_eval(sys, traj, prov, seg.times[mid]) - seg.points[mid])
            .norm() < 1e-13);

  SimulateOptions fine;
  fine.steps_per_segment = 4096;
  HybridTrajectory ref =
      simulate_hybrid(sys, u, fixtures::torus_x0(), 0, 0.0, 8.0, fine);
  std::vector<ControlProvider> prov2(6, u.provider());
  double t = 0.5 * (seg.times[mid] + seg.times[mid + 1]);
  Vector a = trajectory_eval(sys, traj, prov, t);
  Vector b = trajectory_eval(sys, ref, prov2, t);
  CHECK((a - b).norm() < 1e-6);
}
