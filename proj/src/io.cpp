#include "hmp/io.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hmp/errors.hpp"

namespace hmp {

namespace {
constexpr const char* kToolVersion = "0.1.0";

std::string timestamp_line() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return std::string("# generated_at=") + buf + "\n";
}

std::string meta_line(const OutputMeta& meta) {
  std::ostringstream out;
  out << "# tool=hmp version=" << kToolVersion << " config=" << meta.config_hash
      << " seed=" << meta.seed << "\n";
  return out.str();
}
}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const std::string& path, const OutputMeta& meta,
                       const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << timestamp_line() << meta_line(meta) << content;
  }
  fs::rename(tmp, target);
}

void export_trajectory_csv(const std::string& path, const OutputMeta& meta,
                           const HybridSystem& sys,
                           const HybridTrajectory& traj) {
  const int n = sys.dim();
  const bool embedded = sys.manifold->has_embedding();
  std::ostringstream out;
  out << "segment,q,t";
  for (int i = 0; i < n; ++i) out << ",x" << i;
  if (embedded) {
    for (int i = 0; i < sys.manifold->ambient_dimension(); ++i) {
      out << ",amb" << i;
    }
  }
  for (int i = 0; i < sys.control_dim(); ++i) out << ",u" << i;
  out << "\n";
  for (size_t k = 0; k < traj.segments.size(); ++k) {
    const SegmentPath& seg = traj.segments[k];
    for (size_t i = 0; i < seg.times.size(); ++i) {
      out << k << "," << seg.state_id << "," << format_double(seg.times[i]);
      for (int c = 0; c < n; ++c) {
        out << "," << format_double(seg.points[i][c]);
      }
      if (embedded) {
        Vector amb = sys.manifold->embed(
            sys.manifold->canonicalize(ChartPoint(seg.points[i].head(n),
                                                  sys.manifold->name())));
        for (Eigen::Index c = 0; c < amb.size(); ++c) {
          out << "," << format_double(amb[c]);
        }
      }
      for (Eigen::Index c = 0; c < seg.controls[i].size(); ++c) {
        out << "," << format_double(seg.controls[i][c]);
      }
      out << "\n";
    }
  }
  write_text_atomic(path, meta, out.str());
}

void export_events_csv(const std::string& path, const OutputMeta& meta,
                       const HybridSystem& sys, const HybridTrajectory& traj) {
  const int n = sys.dim();
  std::ostringstream out;
  out << "k,t_s,surface";
  for (int i = 0; i < n; ++i) out << ",x_minus" << i;
  for (int i = 0; i < n; ++i) out << ",x_plus" << i;
  out << ",dN_dot_f\n";
  for (int k = 0; k < traj.switch_count(); ++k) {
    const auto& pair = traj.jump_pairs[size_t(k)];
    const SegmentPath& seg = traj.segments[size_t(k)];
    Vector dn = sys.surfaces[size_t(k)].gradient_at(pair.first);
    Vector f = sys.fields[size_t(seg.state_index)](pair.first,
                                                   seg.controls.back());
    out << k << "," << format_double(traj.switch_time(k)) << ","
        << sys.surfaces[size_t(k)].id;
    for (int i = 0; i < n; ++i) out << "," << format_double(pair.first[i]);
    for (int i = 0; i < n; ++i) out << "," << format_double(pair.second[i]);
    out << "," << format_double(dn.dot(f)) << "\n";
  }
  write_text_atomic(path, meta, out.str());
}

void export_adjoint_csv(const std::string& path, const OutputMeta& meta,
                        const HybridTrajectory& traj,
                        const AdjointTrajectory& adj) {
  std::ostringstream out;
  const Eigen::Index pdim = adj.covectors.front().front().size();
  out << "segment,t";
  for (Eigen::Index i = 0; i < pdim; ++i) out << ",p" << i;
  out << ",H\n";
  for (size_t k = 0; k < adj.times.size(); ++k) {
    for (size_t i = 0; i < adj.times[k].size(); ++i) {
      out << k << "," << format_double(adj.times[k][i]);
      for (Eigen::Index c = 0; c < pdim; ++c) {
        out << "," << format_double(adj.covectors[k][i][c]);
      }
      out << "," << format_double(adj.hamiltonians[k][i]) << "\n";
    }
  }
  (void)traj;
  write_text_atomic(path, meta, out.str());
}

void export_switch_report_csv(const std::string& path, const OutputMeta& meta,
                              const HybridSystem& sys,
                              const HybridTrajectory& traj,
                              const AdjointTrajectory& adj) {
  std::ostringstream out;
  out << "k,t_s,mu,abs_dH,dN_dot_f0\n";
  for (int k = 0; k < traj.switch_count(); ++k) {
    const auto& pair = traj.jump_pairs[size_t(k)];
    const SegmentPath& seg = traj.segments[size_t(k)];
    Vector dn = sys.surfaces[size_t(k)].gradient_at(pair.first);
    Vector f = sys.fields[size_t(seg.state_index)](pair.first,
                                                   seg.controls.back());
    out << k << "," << format_double(traj.switch_time(k)) << ","
        << format_double(adj.mus[size_t(k)]) << ","
        << format_double(adj.switch_hamiltonian_gaps[size_t(k)]) << ","
        << format_double(dn.dot(f)) << "\n";
  }
  write_text_atomic(path, meta, out.str());
}

void export_pmp_json(const std::string& path, const OutputMeta& meta,
                     const PMPReport& report) {
  nlohmann::json j;
  j["max_min_violation"] = report.max_min_violation;
  j["switch_hamiltonian_gaps"] = report.switch_hamiltonian_gaps;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.samples) {
    samples.push_back({{"t", s.t}, {"segment", s.segment}, {"gap", s.gap}});
  }
  j["samples"] = samples;
  write_text_atomic(path, meta, j.dump(2) + "\n");
}

void export_iterations_csv(const std::string& path, const OutputMeta& meta,
                           const std::vector<IterationRecord>& log) {
  std::ostringstream out;
  out << "iter,cost,grad_norm,step\n";
  for (const auto& rec : log) {
    out << rec.iter << "," << format_double(rec.cost) << ","
        << format_double(rec.grad_norm) << "," << format_double(rec.step)
        << "\n";
  }
  write_text_atomic(path, meta, out.str());
}

void export_solution_json(const std::string& path, const OutputMeta& meta,
                          const SolverSolution& sol) {
  nlohmann::json j;
  j["converged"] = sol.converged;
  j["cost"] = sol.cost;
  j["resimulated_cost"] = sol.resimulated_cost;
  j["grad_norm"] = sol.grad_norm;
  j["switch_times"] = sol.decision.times;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : sol.decision.on_surface) {
    std::vector<double> v(p.data(), p.data() + p.size());
    params.push_back(v);
  }
  j["on_surface"] = params;
  std::vector<double> ptf(sol.p_tf.data(), sol.p_tf.data() + sol.p_tf.size());
  j["p_tf"] = ptf;
  j["mus"] = sol.adjoint.adjoint.mus;
  j["switch_hamiltonian_gaps"] = sol.adjoint.adjoint.switch_hamiltonian_gaps;
  j["pmp_max_min_violation"] = sol.pmp.max_min_violation;
  j["iterations"] = sol.iterations.size();
  write_text_atomic(path, meta, j.dump(2) + "\n");
}

void export_controls_csv(const std::string& path, const OutputMeta& meta,
                         const std::vector<ControlSignal>& controls) {
  std::ostringstream out;
  int m = controls.empty() ? 0 : controls.front().control_dim();
  out << "segment,t";
  for (int i = 0; i < m; ++i) out << ",u" << i;
  out << "\n";
  for (size_t k = 0; k < controls.size(); ++k) {
    for (size_t i = 0; i < controls[k].grid().size(); ++i) {
      out << k << "," << format_double(controls[k].grid()[i]);
      for (Eigen::Index c = 0; c < controls[k].values()[i].size(); ++c) {
        out << "," << format_double(controls[k].values()[i][c]);
      }
      out << "\n";
    }
  }
  write_text_atomic(path, meta, out.str());
}

void export_cone_json(const std::string& path, const OutputMeta& meta,
                      const ConeReport& report) {
  nlohmann::json j;
  j["min_pairing"] = report.min_pairing;
  j["scale"] = report.scale;
  j["samples"] = report.samples;
  j["worst"] = {{"t", report.worst.t},
                {"segment", report.worst.segment},
                {"pairing", report.worst.pairing}};
  write_text_atomic(path, meta, j.dump(2) + "\n");
}

void export_verification(const std::string& json_path,
                         const std::string& text_path, const OutputMeta& meta,
                         const std::vector<std::vector<SensitivityRecord>>&
                             per_instance_records) {
  nlohmann::json all = nlohmann::json::array();
  std::ostringstream table;
  table << "instance formula                     branch  value          "
           "order   rel_err@1e-4  pass\n";
  bool any_fail = false;
  for (size_t inst = 0; inst < per_instance_records.size(); ++inst) {
    for (const auto& rec : per_instance_records[inst]) {
      nlohmann::json j;
      j["instance"] = inst;
      j["formula"] = rec.formula;
      j["branch"] = rec.branch;
      j["formula_value"] = rec.formula_value;
      j["epsilons"] = rec.epsilons;
      j["fd_errors"] = rec.fd_errors;
      j["fitted_order"] = rec.fitted_order;
      j["terminal_rel_error"] = rec.terminal_rel_error;
      j["pass"] = rec.pass;
      all.push_back(j);
      char line[160];
      std::snprintf(line, sizeof(line),
                    "%-8zu %-27s %-7s %-14.6g %-7.3f %-13.3g %s\n", inst,
                    rec.formula.c_str(), rec.branch.c_str(), rec.formula_value,
                    rec.fitted_order, rec.terminal_rel_error,
                    rec.pass ? "yes" : "NO");
      table << line;
      any_fail = any_fail || !rec.pass;
    }
  }
  table << (any_fail ? "RESULT: FAIL\n" : "RESULT: PASS\n");
  write_text_atomic(json_path, meta, all.dump(2) + "\n");
  write_text_atomic(text_path, meta, table.str());
}

}  // namespace hmp
