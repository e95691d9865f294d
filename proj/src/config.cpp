#include "hmp/config.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

using nlohmann::json;

namespace {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

Vector parse_vector(const json& j) {
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[Eigen::Index(i)] = j[i].get<double>();
  return v;
}

Matrix parse_matrix(const json& j) {
  size_t rows = j.size();
  size_t cols = j.at(0).size();
  Matrix M(rows, cols);
  for (size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw ConfigError("ragged matrix in config");
    for (size_t k = 0; k < cols; ++k) M(int(i), int(k)) = j[i][k].get<double>();
  }
  return M;
}

ManifoldPtr parse_manifold(const json& j) {
  std::string type = j.at("type").get<std::string>();
  if (type == "euclidean") {
    return make_euclidean(j.at("dimension").get<int>());
  }
  if (type == "torus") {
    return make_torus(j.at("major_radius").get<double>(),
                      j.at("minor_radius").get<double>());
  }
  if (type == "sphere") {
    return make_sphere(j.at("radius").get<double>());
  }
  throw ConfigError("unknown manifold type '" + type + "'");
}

ControlledField parse_field(const json& j, int control_dim) {
  if (j.contains("A")) {
    Matrix A = parse_matrix(j.at("A"));
    Matrix B = parse_matrix(j.at("B"));
    if (int(B.cols()) != control_dim) {
      throw ConfigError("input matrix B column count does not match control dim");
    }
    return linear_field(A, B);
  }
  std::string name = j.at("field").get<std::string>();
  if (name == "forced_pendulum") {
    double damping = j.value("damping", 0.0);
    Matrix B = j.contains("B") ? parse_matrix(j.at("B"))
                               : (Matrix(2, 1) << 0.0, 1.0).finished();
    ControlledField f;
    f.control_dim = int(B.cols());
    f.eval = [damping, B](const Vector& x, const Vector& u) -> Vector {
      Vector out(2);
      out[0] = x[1];
      out[1] = -std::sin(x[0]) - damping * x[1];
      out += B * u;
      return out;
    };
    f.jac_x = [damping](const Vector& x, const Vector&) -> Matrix {
      Matrix J(2, 2);
      J << 0.0, 1.0, -std::cos(x[0]), -damping;
      return J;
    };
    return f;
  }
  throw ConfigError("unknown registered field '" + name + "'");
}

TerminalCost parse_terminal(const json& j, int dim) {
  if (j.is_string()) {
    if (j.get<std::string>() == "zero") return TerminalCost::zero(dim);
    throw ConfigError("unknown terminal cost '" + j.get<std::string>() + "'");
  }
  std::string type = j.at("type").get<std::string>();
  if (type == "quadratic") {
    Vector target = parse_vector(j.at("target"));
    Matrix W = j.contains("weight") ? parse_matrix(j.at("weight"))
                                    : Matrix::Identity(dim, dim);
    TerminalCost h;
    h.eval = [W, target](const Vector& x) {
      Vector d = x - target;
      return 0.5 * d.dot(W * d);
    };
    h.grad = [W, target](const Vector& x) -> Vector { return W * (x - target); };
    return h;
  }
  if (type == "linear") {
    Vector g = parse_vector(j.at("gradient"));
    TerminalCost h;
    h.eval = [g](const Vector& x) { return g.dot(x); };
    h.grad = [g](const Vector&) { return g; };
    return h;
  }
  throw ConfigError("unknown terminal cost type '" + type + "'");
}

}  // namespace

std::pair<Vector, double> invert_embedding(const RiemannianManifold& manifold,
                                           const Vector& ambient) {
  if (manifold.name() == "torus") {
    // Least-squares inversion of the doughnut parametrization.
    double x = ambient[0], y = ambient[1], z = ambient[2];
    double zeta = std::atan2(y, x);
    double rho = std::hypot(x, y);
    // Major radius recovered from the embedding of the chart origin.
    Vector origin2(2);
    origin2 << 0.0, M_PI / 2.0;
    Vector probe = manifold.embed(ChartPoint(origin2, manifold.name()));
    double R = std::hypot(probe[0], probe[1]);
    double w = std::atan2(z, rho - R);
    Vector chart(2);
    chart << zeta, w;
    double residual =
        (manifold.embed(ChartPoint(chart, manifold.name())) - ambient).norm();
    return {chart, residual};
  }
  if (manifold.name() == "sphere") {
    double r = ambient.norm();
    Vector chart(2);
    chart << std::acos(ambient[2] / r), std::atan2(ambient[1], ambient[0]);
    double residual =
        (manifold.embed(ChartPoint(chart, manifold.name())) - ambient).norm();
    return {chart, residual};
  }
  if (manifold.name().rfind("euclidean", 0) == 0) {
    return {ambient, 0.0};
  }
  throw ConfigError("no chart inversion registered for manifold '" +
                    manifold.name() + "'");
}

namespace {

Vector parse_boundary_point(const json& boundary, const std::string& key,
                            const RiemannianManifold& manifold,
                            std::map<std::string, double>* residuals) {
  if (boundary.contains(key)) {
    return parse_vector(boundary.at(key));
  }
  std::string akey = key + "_ambient";
  if (!boundary.contains(akey)) {
    throw ConfigError("boundary block missing '" + key + "'");
  }
  auto [chart, residual] =
      invert_embedding(manifold, parse_vector(boundary.at(akey)));
  (*residuals)[key] = residual;
  std::string ukey = key + "_unwrap";
  if (boundary.contains(ukey)) {
    Vector unwrap = parse_vector(boundary.at(ukey));
    for (Eigen::Index i = 0; i < chart.size(); ++i) {
      const auto& period = manifold.periods()[size_t(i)];
      if (period) chart[i] += unwrap[i] * *period;
    }
  }
  return chart;
}

}  // namespace

ProblemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string raw = buffer.str();

  json j;
  try {
    j = json::parse(raw);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }

  ProblemConfig cfg;
  cfg.config_hash = fnv1a_hex(raw);
  try {
    cfg.name = j.value("name", "unnamed");
    cfg.seed = j.value("seed", std::uint64_t(0));

    HybridSystem& sys = cfg.system;
    sys.manifold = parse_manifold(j.at("manifold"));
    const int dim = sys.manifold->dimension();

    for (const auto& s : j.at("states")) {
      sys.states.push_back(s.get<std::string>());
    }

    const json& control = j.at("control");
    int control_dim = control.at("dim").get<int>();
    for (const auto& b : control.at("bounds")) {
      sys.control_bounds.push_back({b[0].get<double>(), b[1].get<double>()});
    }
    if (int(sys.control_bounds.size()) != control_dim) {
      throw ConfigError("control bounds must list one [lo, hi] per component");
    }

    std::map<std::string, json> dynamics_by_state;
    for (const auto& d : j.at("dynamics")) {
      dynamics_by_state[d.at("state").get<std::string>()] = d;
    }
    for (const auto& state : sys.states) {
      auto it = dynamics_by_state.find(state);
      if (it == dynamics_by_state.end()) {
        throw ConfigError("no dynamics block for state '" + state + "'");
      }
      sys.fields.push_back(parse_field(it->second, control_dim));
    }

    for (const auto& s : j.at("surfaces")) {
      std::string id = s.value("id", "s" + std::to_string(sys.surfaces.size()));
      std::string from = s.at("from").get<std::string>();
      std::string to = s.at("to").get<std::string>();
      double orientation = s.value("orientation", 1.0);
      if (s.contains("coordinate")) {
        sys.surfaces.push_back(axis_surface(id, s.at("coordinate").get<int>(),
                                            s.at("level").get<double>(), from,
                                            to, orientation));
      } else {
        sys.surfaces.push_back(affine_surface(id, parse_vector(s.at("normal")),
                                              s.at("offset").get<double>(),
                                              from, to, orientation));
      }
    }

    if (j.contains("jumps")) {
      std::map<std::string, json> jump_by_surface;
      for (const auto& jm : j.at("jumps")) {
        jump_by_surface[jm.at("surface").get<std::string>()] = jm;
      }
      for (const auto& s : sys.surfaces) {
        auto it = jump_by_surface.find(s.id);
        if (it == jump_by_surface.end()) {
          sys.jumps.push_back(JumpMap::identity());
          continue;
        }
        std::string type = it->second.at("type").get<std::string>();
        if (type == "identity") {
          sys.jumps.push_back(JumpMap::identity());
        } else if (type == "affine") {
          sys.jumps.push_back(JumpMap::affine(parse_matrix(it->second.at("M")),
                                              parse_vector(it->second.at("c"))));
        } else {
          throw ConfigError("unknown jump type '" + type + "'");
        }
      }
    } else {
      for (size_t k = 0; k < sys.surfaces.size(); ++k) {
        sys.jumps.push_back(JumpMap::identity());
      }
    }

    const json& cost = j.at("cost");
    std::string loss_name = cost.value("loss", "none");
    for (size_t q = 0; q < sys.states.size(); ++q) {
      if (loss_name == "quadratic_control") {
        sys.losses.emplace_back(quadratic_control_loss());
      } else if (loss_name == "none" || loss_name == "zero") {
        sys.losses.emplace_back(std::nullopt);
      } else {
        throw ConfigError("unknown loss '" + loss_name + "'");
      }
    }
    sys.terminal_cost = cost.contains("terminal")
                            ? parse_terminal(cost.at("terminal"), dim)
                            : TerminalCost::zero(dim);

    cfg.t0 = j.at("horizon").at("t0").get<double>();
    cfg.tf = j.at("horizon").at("tf").get<double>();

    const json& boundary = j.at("boundary");
    cfg.x0 = parse_boundary_point(boundary, "x0", *sys.manifold,
                                  &cfg.inversion_residuals);
    cfg.q0 = sys.state_index(boundary.value("q0", sys.states.front()));
    if (boundary.contains("xf") || boundary.contains("xf_ambient")) {
      cfg.xf = parse_boundary_point(boundary, "xf", *sys.manifold,
                                    &cfg.inversion_residuals);
    }

    if (j.contains("integration")) {
      cfg.steps_per_segment =
          j.at("integration").value("steps_per_segment", 1024);
    }

    if (j.contains("solver")) {
      const json& s = j.at("solver");
      cfg.solver.max_iter = s.value("max_iter", cfg.solver.max_iter);
      cfg.solver.grad_tol = s.value("grad_tol", cfg.solver.grad_tol);
      cfg.solver.fd_step = s.value("fd_step", cfg.solver.fd_step);
      cfg.solver.armijo_c = s.value("armijo_c", cfg.solver.armijo_c);
      cfg.solver.max_halvings = s.value("max_halvings", cfg.solver.max_halvings);
      cfg.solver.min_time_gap = s.value("min_time_gap", cfg.solver.min_time_gap);
      cfg.solver.resim_steps = s.value("resim_steps", cfg.solver.resim_steps);
      cfg.solver.gramian_cond_limit =
          s.value("gramian_cond_limit", cfg.solver.gramian_cond_limit);
      cfg.solver.pmp_control_grid =
          s.value("pmp_control_grid", cfg.solver.pmp_control_grid);
      cfg.solver.pmp_time_samples =
          s.value("pmp_time_samples", cfg.solver.pmp_time_samples);
      if (s.contains("initial")) {
        SwitchDecision d;
        for (const auto& t : s.at("initial").at("times")) {
          d.times.push_back(t.get<double>());
        }
        for (const auto& p : s.at("initial").at("on_surface")) {
          d.on_surface.push_back(parse_vector(p));
        }
        cfg.solver.initial = std::move(d);
      }
    }

    if (j.contains("simulate")) {
      const json& s = j.at("simulate").at("control");
      cfg.simulate_control.type = s.at("type").get<std::string>();
      if (cfg.simulate_control.type == "constant") {
        cfg.simulate_control.value = parse_vector(s.at("value"));
      } else if (cfg.simulate_control.type == "csv") {
        cfg.simulate_control.path = s.at("path").get<std::string>();
      } else {
        throw ConfigError("unknown simulate control type '" +
                          cfg.simulate_control.type + "'");
      }
    }

    if (j.contains("verify")) {
      const json& v = j.at("verify");
      cfg.verify_instances = v.value("instances", cfg.verify_instances);
      if (v.contains("epsilons")) {
        cfg.verify.epsilons.clear();
        for (const auto& e : v.at("epsilons")) {
          cfg.verify.epsilons.push_back(e.get<double>());
        }
      }
      cfg.verify.steps_per_segment =
          v.value("steps_per_segment", cfg.verify.steps_per_segment);
      cfg.verify.min_order = v.value("min_order", cfg.verify.min_order);
      cfg.verify.max_terminal_rel_error =
          v.value("max_terminal_rel_error", cfg.verify.max_terminal_rel_error);
    }

    cfg.system.check_consistent();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  return cfg;
}

ControlSignal load_control_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open control file '" + path + "'");
  std::vector<double> grid;
  std::vector<Vector> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 't') continue;
    std::stringstream row(line);
    std::vector<double> nums;
    std::string cell;
    while (std::getline(row, cell, ',')) nums.push_back(std::stod(cell));
    if (nums.size() < 2) throw ConfigError("control csv needs t,u columns");
    grid.push_back(nums[0]);
    Vector u(nums.size() - 1);
    for (size_t i = 1; i < nums.size(); ++i) u[Eigen::Index(i - 1)] = nums[i];
    values.push_back(std::move(u));
  }
  if (grid.empty()) throw ConfigError("control csv is empty");
  return ControlSignal(std::move(grid), std::move(values));
}

}  // namespace hmp
