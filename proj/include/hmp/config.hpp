#ifndef HMP_CONFIG_HPP_
#define HMP_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "hmp/needle.hpp"
#include "hmp/solver.hpp"
#include "hmp/system.hpp"

namespace hmp {

struct SimulateControlSpec {
  std::string type = "constant";  // "constant" | "csv"
  Vector value;                   // constant control value
  std::string path;               // csv control file
};

/// Parsed problem configuration: the hybrid system plus horizon, boundary
/// data, per-command blocks, and bookkeeping for deterministic outputs.
struct ProblemConfig {
  std::string name;
  HybridSystem system;
  double t0 = 0.0;
  double tf = 1.0;
  Vector x0;
  int q0 = 0;
  std::optional<Vector> xf;
  // Residual of the least-squares chart inversion when boundary points were
  // given in ambient coordinates.
  std::map<std::string, double> inversion_residuals;
  int steps_per_segment = 1024;
  SolverOptions solver;
  SimulateControlSpec simulate_control;
  VerifyOptions verify;
  int verify_instances = 20;
  std::uint64_t seed = 0;
  std::string config_hash;
};

ProblemConfig load_config(const std::string& path);

/// Least-squares chart inversion of an ambient point for registry manifolds
/// with embeddings; returns chart coordinates and the embedding residual.
std::pair<Vector, double> invert_embedding(const RiemannianManifold& manifold,
                                           const Vector& ambient);

/// Control signal from a two-column-block CSV (t, u components).
ControlSignal load_control_csv(const std::string& path);

}  // namespace hmp

#endif  // HMP_CONFIG_HPP_
