#ifndef HMP_NEEDLE_HPP_
#define HMP_NEEDLE_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hmp/adjoint.hpp"
#include "hmp/chart.hpp"
#include "hmp/control.hpp"
#include "hmp/flow.hpp"
#include "hmp/system.hpp"

namespace hmp {

/// Needle variation: control value u1 on [t1 - eps, t1], nominal elsewhere.
struct NeedleSpec {
  double t1 = 0.0;
  Vector u1;
  std::vector<double> epsilons = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
};

/// Hold extension across a moving switching time: the pre-switch control
/// value is held on [t_s, t_s_eps) when the perturbed crossing is late, and
/// the post-switch value on [t_s_eps, t_s] when it is early.
struct SwitchHold {
  double t_s = 0.0;
  double t_s_eps = 0.0;
  Vector hold_value;
};

/// Applies the needle (and optional hold extension) to a control signal.
ControlSignal perturb_control(const ControlSignal& u, const NeedleSpec& spec,
                              double eps,
                              const std::optional<SwitchHold>& hold = std::nullopt);

/// f(x(t1), u1) - f(x(t1), u(t1)): the first-order state response direction.
Tangent elementary_perturbation(const ControlledField& field,
                                const ChartPoint& x_t1, const Vector& u1,
                                const Vector& u_nominal);

enum class SwitchBranch {
  kLate,   // perturbed crossing at or after the nominal one
  kEarly,  // perturbed crossing before the nominal one
};

/// One-sided derivative of the switching time with respect to the needle
/// width: -<dN, w> / <dN, f0> for the late branch (w is the elementary
/// vector transported to the pre-switch state); the early branch negates it.
/// The late-branch value is the signed derivative d t_s(eps)/d eps at 0+.
double switching_time_derivative(const Cotangent& dN, const Tangent& f0_minus,
                                 const Tangent& w,
                                 SwitchBranch branch = SwitchBranch::kLate,
                                 double transversality_tol = 1e-6);

/// State variation just after the switch:
///   Tz w + (dt_s/d eps) (Tz f0- - f1+),
/// with dt_s/d eps the signed (late-branch) derivative.
Tangent propagate_through_switch(const Tangent& v_minus, double dts_deps,
                                 const JumpMap& jump, const Tangent& f0_minus,
                                 const Tangent& f1_plus);

/// Linear map sending pre-switch state variations to post-switch ones
/// (propagate_through_switch as a matrix).
Matrix switch_variation_matrix(const JumpMap& jump, const Vector& x_minus,
                               const Cotangent& dN, const Tangent& f0_minus,
                               const Tangent& f1_plus);

/// Precomputed linear maps from any trajectory node to the final state:
/// segment transports composed with switch variation maps. Built entirely
/// from the forward variational equation.
class TerminalVariationMap {
 public:
  TerminalVariationMap(const HybridSystem& sys, const HybridTrajectory& traj,
                       const std::vector<ControlProvider>& controls);

  /// Terminal variation produced by a tangent `v` at node `i` of segment `k`.
  Vector to_terminal(int k, size_t i, const Vector& v) const;

  /// <p_tf, to_terminal(k, i, .)> as a covector at node i of segment k.
  Vector pullback_of(int k, size_t i, const Vector& p_tf) const;

 private:
  // node_to_end_[k][i]: transport from node i to the end of segment k.
  std::vector<std::vector<Matrix>> node_to_end_;
  // tail_[k]: map from the end (pre-switch side) of segment k to tf.
  std::vector<Matrix> tail_;
};

struct ConeSample {
  double t = 0.0;
  int segment = 0;
  double pairing = 0.0;
};

struct ConeReport {
  double min_pairing = 0.0;
  double scale = 1.0;  // 1 + max |pairing| over samples
  ConeSample worst;
  int samples = 0;
};

/// Samples needle variations (t1, u1), maps each elementary perturbation to
/// the final time through the variational pipeline, and pairs with the
/// terminal covector. At an optimum the minimum pairing is >= -tol * scale.
ConeReport cone_inequality_check(const HybridSystem& sys,
                                 const HybridTrajectory& traj,
                                 const std::vector<ControlProvider>& controls,
                                 const Vector& p_tf, int n_samples,
                                 std::uint64_t seed);

// ---------------------------------------------------------------------------
// Finite-difference verification harness
// ---------------------------------------------------------------------------

struct SensitivityRecord {
  std::string formula;       // which closed form is being checked
  std::string branch;        // "late" / "early" / "-"
  double formula_value = 0.0;  // scalar value or norm of the vector value
  std::vector<double> epsilons;
  std::vector<double> fd_errors;  // |fd estimate - formula| per epsilon
  double fitted_order = 0.0;
  double terminal_rel_error = 0.0;  // at eps = 1e-4
  bool pass = false;
};

/// Randomized one-switch Mayer instance for formula verification.
struct OneSwitchInstance {
  HybridSystem sys;
  Vector x0;
  double t0 = 0.0;
  double tf = 2.0;
  ControlSignal nominal;
  HybridTrajectory traj;  // nominal trajectory, simulated at construction
};

/// Draws a one-switch instance: random linear modes, a random affine
/// surface crossed transversally mid-horizon, a random smooth jump, and a
/// random quadratic terminal cost. Deterministic in the seed.
OneSwitchInstance make_one_switch_instance(std::uint64_t seed);

struct VerifyOptions {
  std::vector<double> epsilons = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
  double min_order = 0.9;
  double max_terminal_rel_error = 1e-2;
  int steps_per_segment = 1024;
};

/// Runs the finite-difference ladders for the elementary perturbation, the
/// switching-time derivative, the through-switch state variation, and the
/// terminal cost direction on one instance.
std::vector<SensitivityRecord> verify_instance(const OneSwitchInstance& inst,
                                               std::uint64_t seed,
                                               const VerifyOptions& opts = {});

}  // namespace hmp

#endif  // HMP_NEEDLE_HPP_
