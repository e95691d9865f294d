#ifndef HMP_MANIFOLD_HPP_
#define HMP_MANIFOLD_HPP_

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hmp/chart.hpp"

namespace hmp {

using MetricFn = std::function<Matrix(const Vector&)>;
using EmbeddingFn = std::function<Vector(const Vector&)>;

/// Christoffel symbols of the second kind; gamma[k](i, j) holds the
/// coefficient multiplying dx^i dx^j in the k-th geodesic equation.
using Christoffel = std::vector<Matrix>;
using ChristoffelFn = std::function<Christoffel(const Vector&)>;

struct GeodesicOptions {
  int steps = 256;             // RK4 step count over the full parameter range
  double richardson_tol = 1e-7;  // consistency bound against the halved grid
};

/// Riemannian manifold covered by a single global chart with optional
/// per-coordinate periodic identification. The metric must be symmetric
/// positive definite at every queried point.
class RiemannianManifold {
 public:
  RiemannianManifold(std::string name, int dimension, MetricFn metric);

  const std::string& name() const { return name_; }
  int dimension() const { return dim_; }

  void set_period(int coord, double period);
  const std::vector<std::optional<double>>& periods() const { return periods_; }

  void set_embedding(int ambient_dim, EmbeddingFn embedding);
  bool has_embedding() const { return static_cast<bool>(embedding_); }
  int ambient_dimension() const { return ambient_dim_; }
  Vector embed(const ChartPoint& x) const;

  /// Analytic Christoffel symbols; when absent they are obtained from
  /// central finite differences of the metric (step 1e-6).
  void set_christoffel(ChristoffelFn fn) { christoffel_override_ = std::move(fn); }

  ChartPoint point(Vector coords) const;
  ChartPoint canonicalize(const ChartPoint& x) const;

  /// Metric matrix at x; throws MetricDegeneracyError if any eigenvalue
  /// falls below 1e-10.
  Matrix metric_at(const ChartPoint& x) const;

  Christoffel christoffel(const ChartPoint& x) const;

  /// Integrates the geodesic equation from p with initial velocity v to
  /// parameter theta (classical RK4, step theta/steps, with a doubled-step
  /// consistency check). The result is canonicalized under periodicity.
  ChartPoint geodesic_exp(const ChartPoint& p, const Tangent& v, double theta,
                          const GeodesicOptions& opts = {}) const;

  Cotangent lower(const Tangent& v) const;
  Tangent raise(const Cotangent& alpha) const;

 private:
  Matrix metric_raw(const Vector& coords) const;

  std::string name_;
  int dim_;
  MetricFn metric_;
  std::vector<std::optional<double>> periods_;
  EmbeddingFn embedding_;
  int ambient_dim_ = 0;
  ChristoffelFn christoffel_override_;
};

using ManifoldPtr = std::shared_ptr<const RiemannianManifold>;

/// Codimension-1 switching surface given by a local defining function
/// constraint(x) = 0. Orientation +1 means events fire when the trajectory
/// crosses from constraint < 0 to constraint > 0 (-1 for the reverse).
struct SwitchingSurface {
  std::string id;
  std::function<double(const Vector&)> constraint;
  std::function<Vector(const Vector&)> gradient;  // empty -> central FD
  std::string from_state;
  std::string to_state;
  double orientation = 1.0;

  // Set for surfaces that can be parametrized for the switching-state
  // optimizer: chart coordinate `axis` is pinned to `level`, the remaining
  // coordinates are free parameters.
  std::optional<int> axis;
  double level = 0.0;

  double value(const Vector& coords) const { return constraint(coords); }
  Vector gradient_at(const Vector& coords) const;

  bool parametrizable() const { return axis.has_value(); }
  /// Chart coordinates of the surface point with the given free parameters.
  Vector from_parameters(const Vector& params) const;
  /// Free parameters of an on-surface chart point.
  Vector to_parameters(const Vector& coords) const;
};

/// Axis-aligned level-set surface {x : x[axis] = level}.
SwitchingSurface axis_surface(const std::string& id, int axis, double level,
                              const std::string& from_state,
                              const std::string& to_state,
                              double orientation = 1.0);

/// Affine surface {x : normal . x = offset} in a 2-D chart, parametrized along
/// the tangent direction.
SwitchingSurface affine_surface(const std::string& id, const Vector& normal,
                                double offset, const std::string& from_state,
                                const std::string& to_state,
                                double orientation = 1.0);

/// Differential of the defining function at an on-surface point x
/// (|constraint(x)| must be within `surface_tol`). Annihilates tangents to
/// the surface; the switching multiplier absorbs its scaling.
Cotangent surface_oneform(const SwitchingSurface& s, const ChartPoint& x,
                          double surface_tol = 1e-8);

// Registry constructors.
ManifoldPtr make_euclidean(int dimension);
ManifoldPtr make_torus(double major_radius, double minor_radius);
ManifoldPtr make_sphere(double radius);

}  // namespace hmp

#endif  // HMP_MANIFOLD_HPP_
