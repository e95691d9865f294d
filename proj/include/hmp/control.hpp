#ifndef HMP_CONTROL_HPP_
#define HMP_CONTROL_HPP_

#include <functional>
#include <vector>

#include "hmp/chart.hpp"

namespace hmp {

/// Time-indexed control evaluator used by the integrators.
using ControlProvider = std::function<Vector(double)>;

/// Piecewise-constant-left control signal: the value at time t is the one
/// attached to the last grid point <= t (clamped at the ends).
class ControlSignal {
 public:
  ControlSignal() = default;
  ControlSignal(std::vector<double> grid, std::vector<Vector> values);

  static ControlSignal constant(const Vector& value, double t0, double t1);

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Vector>& values() const { return values_; }
  int control_dim() const { return values_.empty() ? 0 : int(values_[0].size()); }

  Vector value_at(double t) const;

  /// Inserts a breakpoint at time t (value = current value_at(t)) if absent.
  void insert_breakpoint(double t);
  /// Overrides the signal with `value` on [a, b); breakpoints are inserted so
  /// the rest of the signal is untouched.
  void override_interval(double a, double b, const Vector& value);

  ControlProvider provider() const;

 private:
  std::vector<double> grid_;
  std::vector<Vector> values_;
};

}  // namespace hmp

#endif  // HMP_CONTROL_HPP_
