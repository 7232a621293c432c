#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psis/rcdf.hpp"
#include "psis/simulation.hpp"
#include "psis/synthesis.hpp"

namespace psis {

enum class Verdict { Pass, Fail, Degenerate };
std::string_view to_string(Verdict v);

struct SettlingOptions {
  double tol = 1e-4;
  double window_factor = 0.9;  // no-early-convergence window [0, window_factor * T_p]
};

/// tol_abs + tol_rel * |x0|_2
double run_tolerance(double tol_abs, double tol_rel, std::span<const double> x0);

struct SettlingEvidence {
  /// First sample time after which |z|_2 stays <= tol; empty when the error
  /// is still above tol at T_p - eps_stop.
  std::optional<double> t_settle;
  double pre_norm_floor = 0.0;  // min |z|_2 over [0, window_factor * T_p]
  double norm_at_tp = 0.0;      // |z(T_p - eps_stop)|_2
  double tol = 0.0;
  double window_factor = 0.9;
  bool degenerate = false;  // |z(0)| <= tol: equilibrium start

  bool no_early_convergence() const { return pre_norm_floor > tol; }
  bool reaches_zero() const { return norm_at_tp <= tol; }
  /// Two-sided clamp: stays away from zero before the window, reaches it by T_p.
  bool psis() const { return !degenerate && no_early_convergence() && reaches_zero(); }
  Verdict verdict() const { return degenerate ? Verdict::Degenerate : (psis() ? Verdict::Pass : Verdict::Fail); }
};

SettlingEvidence settling_instant(const Trajectory& traj, const SettlingOptions& opt);

struct LyapunovRecord {
  double t = 0.0;
  double V = 0.0;
  double dV_analytic = 0.0;
  double lower_bound = 0.0;       // -2 sum(eta) sqrt(V) zeta(sqrt(V)) / (T_p - t)
  double upper_bound = 0.0;       // -2 n min(eta) (|z|_1/n) zeta(|z|_1/n) / (T_p - t)
  double upper_bound_sqrtv = 0.0; // same with |z|_1 replaced by sqrt(V)
  double a1 = 0.0;                // sqrt(V) / n
  double a2 = 0.0;                // sqrt(V)
  std::optional<double> dV_numeric;
  std::optional<double> equality_residual;  // |dV_analytic - dV_numeric|
  bool audited = false;                     // V above the audit floor
  bool bound_violation = false;
  bool residual_violation = false;
};

struct LyapunovOptions {
  double slack_abs = 1e-6;
  double slack_rel = 1e-3;
  double residual_rel = 1e-4;          // residual <= residual_rel * max(1, |dV|)
  double residual_window_lo = 0.05;    // fraction of T_p
  double residual_window_hi = 0.95;
  double v_floor = 1e-20;
};

struct LyapunovAudit {
  std::vector<LyapunovRecord> records;
  std::size_t audited = 0;
  std::size_t bound_violations = 0;
  std::size_t residual_violations = 0;
  std::size_t residual_checked = 0;
  /// max residual / max(1, |dV|) over the residual window
  double worst_residual = 0.0;
  /// max (bound excess / slack) over audited samples; <= 1 means inside
  double worst_bound_ratio = 0.0;
  bool bounds_applicable = true;  // false for mixed RCDF kinds

  bool passes() const { return bound_violations == 0 && residual_violations == 0; }
};

/// Recomputes V, its analytic derivative and both Jensen-derived bounds on
/// every pre-switch sample, and compares against a numeric derivative of V
/// taken with the non-uniform three-point stencil.
LyapunovAudit lyapunov_audit(const Trajectory& traj, std::span<const RcdfSpec> stages, double t_p,
                             const LyapunovOptions& opt = {});

enum class ConcaveFn {
  Sqrt,          // sqrt(x), x >= 0
  Log1p,         // ln(1 + x), x >= 0
  NegSquare,     // -x^2
  NegXZetaLinear,  // -x zeta_linear(x), x >= 0
  NegXZetaTan,     // -x zeta_tan(x), x >= 0
  NegXZetaLogExp,  // -x zeta_logexp(x), 0 <= x <= 2
};

std::string_view to_string(ConcaveFn h);
const std::vector<ConcaveFn>& all_concave_fns();
/// Interval of concavity as [lo, hi].
std::pair<double, double> concavity_interval(ConcaveFn h);
double apply(ConcaveFn h, double x);

struct JensenResult {
  bool holds = false;
  double gap = 0.0;  // h(sum l_i x_i) - sum l_i h(x_i)
};

/// sum l_i h(x_i) <= h(sum l_i x_i) + 1e-12 for convex weights.
JensenResult jensen_check(ConcaveFn h, std::span<const double> xs, std::span<const double> lambdas);

struct ControlVanishing {
  double max_terminal_u = 0.0;  // max |u| over [0.95 T_p, T_p)
  double max_u = 0.0;           // max |u| over [0, T_p)
  double u_at_switch = 0.0;     // |u(T_p - eps_stop)|
  double terminal_ratio = 0.0;  // max_terminal_u / max_u
  bool within_tolerance = false;
  bool zero_after_tp = false;

  bool passes() const { return within_tolerance && zero_after_tp; }
};

/// |u| near and after the switch. within_tolerance compares |u(T_p - eps_stop)|
/// with 10 * tol.
ControlVanishing control_vanishing_check(const Trajectory& traj, double tol);

/// Settling tolerance below what the integrator resolves: tol < 10 (atol + rtol max(1, |x0|_inf)).
std::optional<std::string> tolerance_mismatch(const SimConfig& cfg, double tol);

struct SweepOptions {
  double tol_abs = 1e-4;
  double tol_rel = 1e-6;
  double window_factor = 0.9;
  double spread_bound = 0.05;  // as a fraction of T_p
  unsigned threads = 0;        // 0: hardware concurrency (capped by PSIS_THREADS)
  bool keep_trajectories = false;
};

struct SweepRun {
  double scale = 1.0;
  std::vector<double> x0;
  std::optional<SettlingEvidence> evidence;
  Verdict verdict = Verdict::Fail;
  std::string error;  // simulation failure message, if any
  std::optional<Trajectory> trajectory;
};

struct SweepReport {
  std::vector<SweepRun> runs;  // in the order of `scales`
  double spread = 0.0;         // max |t_settle - T_p| over settled runs
  Verdict verdict = Verdict::Fail;
};

/// Worker count for sweeps: PSIS_THREADS when set, else hardware concurrency.
unsigned sweep_threads(unsigned requested);

SweepReport sweep_initial_conditions(const PlantModel& plant, const Controller& ctrl, const SimConfig& base,
                                     std::span<const double> base_x0, std::span<const double> scales,
                                     const SweepOptions& opt);

}  // namespace psis
