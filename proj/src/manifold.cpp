#include "hmp/manifold.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

namespace {

constexpr double kMetricFdStep = 1e-6;
constexpr double kEigenTol = 1e-10;

double wrap_into(double value, double period) {
  double r = std::fmod(value, period);
  if (r < 0.0) r += period;
  // fmod can return the period itself after the negative adjustment
  if (r >= period) r -= period;
  return r;
}

}  // namespace

RiemannianManifold::RiemannianManifold(std::string name, int dimension,
                                       MetricFn metric)
    : name_(std::move(name)),
      dim_(dimension),
      metric_(std::move(metric)),
      periods_(dimension) {}

void RiemannianManifold::set_period(int coord, double period) {
  periods_.at(coord) = period;
}

void RiemannianManifold::set_embedding(int ambient_dim, EmbeddingFn embedding) {
  if (ambient_dim < dim_) {
    throw Error("embedding ambient dimension below manifold dimension");
  }
  ambient_dim_ = ambient_dim;
  embedding_ = std::move(embedding);
}

Vector RiemannianManifold::embed(const ChartPoint& x) const {
  if (!embedding_) throw Error("manifold '" + name_ + "' has no embedding");
  return embedding_(x.coords);
}

ChartPoint RiemannianManifold::point(Vector coords) const {
  if (coords.size() != dim_) {
    throw Error("coordinate vector has wrong dimension for " + name_);
  }
  return ChartPoint(std::move(coords), name_);
}

ChartPoint RiemannianManifold::canonicalize(const ChartPoint& x) const {
  ChartPoint out = x;
  for (int i = 0; i < dim_; ++i) {
    if (periods_[i]) out.coords[i] = wrap_into(out.coords[i], *periods_[i]);
  }
  return out;
}

Matrix RiemannianManifold::metric_raw(const Vector& coords) const {
  return metric_(coords);
}

Matrix RiemannianManifold::metric_at(const ChartPoint& x) const {
  Matrix g = metric_raw(x.coords);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()));
  if (es.eigenvalues().minCoeff() < kEigenTol) {
    std::ostringstream msg;
    msg << "metric of '" << name_ << "' not positive definite at ["
        << x.coords.transpose() << "] (min eigenvalue "
        << es.eigenvalues().minCoeff() << ")";
    throw MetricDegeneracyError(msg.str());
  }
  return g;
}

Christoffel RiemannianManifold::christoffel(const ChartPoint& x) const {
  if (christoffel_override_) return christoffel_override_(x.coords);

  const int n = dim_;
  Matrix g = metric_at(x);
  Eigen::LDLT<Matrix> ginv(g);

  // dg[l](i, j) = d g_ij / d x^l, central differences
  std::vector<Matrix> dg(n);
  for (int l = 0; l < n; ++l) {
    Vector xp = x.coords, xm = x.coords;
    xp[l] += kMetricFdStep;
    xm[l] -= kMetricFdStep;
    dg[l] = (metric_raw(xp) - metric_raw(xm)) / (2.0 * kMetricFdStep);
  }

  Christoffel gamma(n, Matrix::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Vector rhs(n);
      for (int l = 0; l < n; ++l) {
        rhs[l] = 0.5 * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
      }
      Vector gk = ginv.solve(rhs);
      for (int k = 0; k < n; ++k) {
        gamma[k](i, j) = gk[k];
        gamma[k](j, i) = gk[k];
      }
    }
  }
  return gamma;
}

ChartPoint RiemannianManifold::geodesic_exp(const ChartPoint& p,
                                            const Tangent& v, double theta,
                                            const GeodesicOptions& opts) const {
  if (v.base.coords.size() != dim_) {
    throw Error("tangent dimension mismatch in geodesic_exp");
  }
  if (theta == 0.0) return canonicalize(p);

  auto accel = [this](const Vector& x, const Vector& xdot) -> Vector {
    Christoffel gamma = christoffel(ChartPoint(x, name_));
    Vector a(dim_);
    for (int k = 0; k < dim_; ++k) a[k] = -xdot.dot(gamma[k] * xdot);
    return a;
  };

  auto integrate = [&](int steps) -> Vector {
    const double h = theta / steps;
    Vector x = p.coords, xd = v.components;
    for (int s = 0; s < steps; ++s) {
      Vector k1x = xd, k1v = accel(x, xd);
      Vector k2x = xd + 0.5 * h * k1v, k2v = accel(x + 0.5 * h * k1x, k2x);
      Vector k3x = xd + 0.5 * h * k2v, k3v = accel(x + 0.5 * h * k2x, k3x);
      Vector k4x = xd + h * k3v, k4v = accel(x + h * k3x, k4x);
      x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      xd += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
      if (!x.allFinite() || !xd.allFinite()) {
        throw GeodesicEscapeError("geodesic integration blew up on '" + name_ +
                                  "'");
      }
    }
    return x;
  };

  Vector fine = integrate(opts.steps);
  Vector coarse = integrate(std::max(1, opts.steps / 2));
  double scale = 1.0 + fine.norm();
  if ((fine - coarse).norm() > opts.richardson_tol * scale) {
    throw GeodesicEscapeError(
        "geodesic step-doubling check failed on '" + name_ + "'");
  }
  return canonicalize(ChartPoint(fine, name_));
}

Cotangent RiemannianManifold::lower(const Tangent& v) const {
  Matrix g = metric_at(v.base);
  return Cotangent(v.base, g * v.components);
}

Tangent RiemannianManifold::raise(const Cotangent& alpha) const {
  Matrix g = metric_at(alpha.base);
  return Tangent(alpha.base, Eigen::LDLT<Matrix>(g).solve(alpha.components));
}

Vector SwitchingSurface::gradient_at(const Vector& coords) const {
  if (gradient) return gradient(coords);
  const double h = 1e-6;
  Vector g(coords.size());
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    Vector xp = coords, xm = coords;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (constraint(xp) - constraint(xm)) / (2.0 * h);
  }
  return g;
}

Vector SwitchingSurface::from_parameters(const Vector& params) const {
  if (!axis) throw Error("surface '" + id + "' has no parametrization");
  Vector coords(params.size() + 1);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    coords[i] = (i == *axis) ? level : params[j++];
  }
  return coords;
}

Vector SwitchingSurface::to_parameters(const Vector& coords) const {
  if (!axis) throw Error("surface '" + id + "' has no parametrization");
  Vector params(coords.size() - 1);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    if (i != *axis) params[j++] = coords[i];
  }
  return params;
}

SwitchingSurface axis_surface(const std::string& id, int axis, double level,
                              const std::string& from_state,
                              const std::string& to_state, double orientation) {
  SwitchingSurface s;
  s.id = id;
  s.constraint = [axis, level](const Vector& x) { return x[axis] - level; };
  s.gradient = [axis](const Vector& x) {
    Vector g = Vector::Zero(x.size());
    g[axis] = 1.0;
    return g;
  };
  s.from_state = from_state;
  s.to_state = to_state;
  s.orientation = orientation;
  s.axis = axis;
  s.level = level;
  return s;
}

SwitchingSurface affine_surface(const std::string& id, const Vector& normal,
                                double offset, const std::string& from_state,
                                const std::string& to_state,
                                double orientation) {
  SwitchingSurface s;
  Vector a = normal;
  s.id = id;
  s.constraint = [a, offset](const Vector& x) { return a.dot(x) - offset; };
  s.gradient = [a](const Vector&) { return a; };
  s.from_state = from_state;
  s.to_state = to_state;
  s.orientation = orientation;
  return s;
}

Cotangent surface_oneform(const SwitchingSurface& s, const ChartPoint& x,
                          double surface_tol) {
  double val = s.value(x.coords);
  if (std::abs(val) > surface_tol) {
    std::ostringstream msg;
    msg << "surface_oneform queried off surface '" << s.id
        << "' (constraint value " << val << ")";
    throw Error(msg.str());
  }
  Vector g = s.gradient_at(x.coords);
  if (g.norm() <= 1e-10) {
    throw DegenerateSurfaceError("zero constraint gradient on surface '" +
                                 s.id + "'");
  }
  return Cotangent(x, g);
}

ManifoldPtr make_euclidean(int dimension) {
  auto m = std::make_shared<RiemannianManifold>(
      "euclidean" + std::to_string(dimension), dimension,
      [dimension](const Vector&) -> Matrix {
        return Matrix::Identity(dimension, dimension);
      });
  return m;
}

ManifoldPtr make_torus(double major_radius, double minor_radius) {
  const double R = major_radius, r = minor_radius;
  auto m = std::make_shared<RiemannianManifold>(
      "torus", 2, [R, r](const Vector& x) -> Matrix {
        const double ring = R + r * std::cos(x[1]);
        Matrix g(2, 2);
        g << ring * ring, 0.0, 0.0, r * r;
        return g;
      });
  m->set_period(0, 2.0 * M_PI);
  m->set_period(1, 2.0 * M_PI);
  m->set_embedding(3, [R, r](const Vector& x) -> Vector {
    const double ring = R + r * std::cos(x[1]);
    Vector amb(3);
    amb << ring * std::cos(x[0]), ring * std::sin(x[0]), r * std::sin(x[1]);
    return amb;
  });
  return m;
}

ManifoldPtr make_sphere(double radius) {
  const double rho = radius;
  // Polar chart (colatitude, azimuth); degenerate at the poles, which the
  // positive-definiteness check reports.
  auto m = std::make_shared<RiemannianManifold>(
      "sphere", 2, [rho](const Vector& x) -> Matrix {
        Matrix g(2, 2);
        const double s = std::sin(x[0]);
        g << rho * rho, 0.0, 0.0, rho * rho * s * s;
        return g;
      });
  m->set_period(1, 2.0 * M_PI);
  m->set_embedding(3, [rho](const Vector& x) -> Vector {
    Vector amb(3);
    amb << rho * std::sin(x[0]) * std::cos(x[1]),
        rho * std::sin(x[0]) * std::sin(x[1]), rho * std::cos(x[0]);
    return amb;
  });
  return m;
}

}  // namespace hmp
