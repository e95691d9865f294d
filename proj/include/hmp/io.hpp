#ifndef HMP_IO_HPP_
#define HMP_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "hmp/adjoint.hpp"
#include "hmp/needle.hpp"
#include "hmp/solver.hpp"
#include "hmp/system.hpp"

namespace hmp {

/// Metadata stamped into every output file header. The timestamp line is the
/// only non-deterministic output byte.
struct OutputMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Writes content atomically (temp file + rename), prefixed by the header.
void write_text_atomic(const std::string& path, const OutputMeta& meta,
                       const std::string& content);

std::string format_double(double v);

void export_trajectory_csv(const std::string& path, const OutputMeta& meta,
                           const HybridSystem& sys,
                           const HybridTrajectory& traj);

void export_events_csv(const std::string& path, const OutputMeta& meta,
                       const HybridSystem& sys, const HybridTrajectory& traj);

void export_adjoint_csv(const std::string& path, const OutputMeta& meta,
                        const HybridTrajectory& traj,
                        const AdjointTrajectory& adj);

void export_switch_report_csv(const std::string& path, const OutputMeta& meta,
                              const HybridSystem& sys,
                              const HybridTrajectory& traj,
                              const AdjointTrajectory& adj);

void export_pmp_json(const std::string& path, const OutputMeta& meta,
                     const PMPReport& report);

void export_iterations_csv(const std::string& path, const OutputMeta& meta,
                           const std::vector<IterationRecord>& log);

void export_solution_json(const std::string& path, const OutputMeta& meta,
                          const SolverSolution& sol);

void export_controls_csv(const std::string& path, const OutputMeta& meta,
                         const std::vector<ControlSignal>& controls);

void export_cone_json(const std::string& path, const OutputMeta& meta,
                      const ConeReport& report);

void export_verification(const std::string& json_path,
                         const std::string& text_path, const OutputMeta& meta,
                         const std::vector<std::vector<SensitivityRecord>>&
                             per_instance_records);

}  // namespace hmp

#endif  // HMP_IO_HPP_
