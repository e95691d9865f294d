#ifndef HMP_CHART_HPP_
#define HMP_CHART_HPP_

#include <Eigen/Core>
#include <string>
#include <utility>

namespace hmp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point of a manifold expressed in its global chart. Coordinates are raw
/// chart values (angular coordinates are not pre-wrapped; see
/// RiemannianManifold::canonicalize for the representative in [0, period)).
struct ChartPoint {
  Vector coords;
  std::string manifold_id;

  ChartPoint() = default;
  ChartPoint(Vector c, std::string id)
      : coords(std::move(c)), manifold_id(std::move(id)) {}

  Eigen::Index dim() const { return coords.size(); }
};

/// Tangent vector bound to its base point.
struct Tangent {
  ChartPoint base;
  Vector components;

  Tangent() = default;
  Tangent(ChartPoint b, Vector c)
      : base(std::move(b)), components(std::move(c)) {}
};

/// Covector (coefficients in the coordinate coframe) bound to its base point.
struct Cotangent {
  ChartPoint base;
  Vector components;

  Cotangent() = default;
  Cotangent(ChartPoint b, Vector c)
      : base(std::move(b)), components(std::move(c)) {}
};

/// Canonical pairing <p, v> of a covector with a tangent vector.
inline double pairing(const Cotangent& p, const Tangent& v) {
  return p.components.dot(v.components);
}

}  // namespace hmp

#endif  // HMP_CHART_HPP_
