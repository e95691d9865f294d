#include "hmp/control.hpp"

#include <algorithm>
#include <cmath>

#include "hmp/errors.hpp"

namespace hmp {

ControlSignal::ControlSignal(std::vector<double> grid,
                             std::vector<Vector> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.empty() || grid_.size() != values_.size()) {
    throw Error("control signal grid/value size mismatch");
  }
  for (size_t i = 1; i < grid_.size(); ++i) {
    if (grid_[i] <= grid_[i - 1]) {
      throw Error("control signal grid not strictly increasing");
    }
  }
}

ControlSignal ControlSignal::constant(const Vector& value, double t0,
                                      double t1) {
  return ControlSignal({t0, t1}, {value, value});
}

Vector ControlSignal::value_at(double t) const {
  if (t <= grid_.front()) return values_.front();
  auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  size_t idx = size_t(it - grid_.begin()) - 1;
  return values_[idx];
}

void ControlSignal::insert_breakpoint(double t) {
  auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
  if (it != grid_.end() && std::abs(*it - t) < 1e-14) return;
  Vector v = value_at(t);
  size_t idx = size_t(it - grid_.begin());
  grid_.insert(grid_.begin() + idx, t);
  values_.insert(values_.begin() + idx, v);
}

void ControlSignal::override_interval(double a, double b, const Vector& value) {
  if (b <= a) throw Error("empty override interval");
  insert_breakpoint(a);
  insert_breakpoint(b);
  for (size_t i = 0; i < grid_.size(); ++i) {
    if (grid_[i] >= a - 1e-14 && grid_[i] < b - 1e-14) values_[i] = value;
  }
}

ControlProvider ControlSignal::provider() const {
  ControlSignal copy = *this;
  return [copy](double t) { return copy.value_at(t); };
}

}  // namespace hmp
