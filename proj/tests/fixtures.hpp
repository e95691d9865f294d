// Shared test systems.

#ifndef HMP_TESTS_FIXTURES_HPP_
#define HMP_TESTS_FIXTURES_HPP_

#include <cmath>

#include "hmp/system.hpp"

namespace fixtures {

using hmp::Matrix;
using hmp::Vector;

/// Six linear modes on the doughnut chart with the ascending schedule of
/// five zeta-level circles, quadratic control energy, zero terminal cost.
inline hmp::HybridSystem torus_six_mode() {
  hmp::HybridSystem sys;
  sys.manifold = hmp::make_torus(1.0, 0.5);
  sys.states = {"q0", "q1", "q2", "q3", "q4", "q5"};
  const double diag[6][2] = {{1.5, 1.0}, {5.0, 1.0}, {3.0, 4.0},
                             {1.0, 3.0}, {1.0, 2.0}, {1.0, 3.0}};
  Matrix B(2, 1);
  B << 1.0, 1.0;
  for (int q = 0; q < 6; ++q) {
    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = diag[q][0];
    A(1, 1) = diag[q][1];
    sys.fields.push_back(hmp::linear_field(A, B));
    sys.losses.emplace_back(hmp::quadratic_control_loss());
  }
  const double levels[5] = {0.0, M_PI / 6.0, M_PI / 3.0, M_PI / 2.0,
                            2.0 * M_PI / 3.0};
  for (int k = 0; k < 5; ++k) {
    sys.surfaces.push_back(hmp::axis_surface(
        "s" + std::to_string(k + 1), 0, levels[k], "q" + std::to_string(k),
        "q" + std::to_string(k + 1)));
    sys.jumps.push_back(hmp::JumpMap::identity());
  }
  sys.control_bounds = {{-50.0, 50.0}};
  sys.terminal_cost = hmp::TerminalCost::zero(2);
  return sys;
}

inline Vector torus_x0() { return (Vector(2) << -0.3, -0.3).finished(); }
inline Vector torus_xf() {
  return (Vector(2) << 4.4248649770395674, 2.9330985302278956).finished();
}

}  // namespace fixtures

#endif  // HMP_TESTS_FIXTURES_HPP_
