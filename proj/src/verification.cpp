#include "psis/verification.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

namespace psis {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass:
      return "pass";
    case Verdict::Fail:
      return "fail";
    case Verdict::Degenerate:
      return "degenerate";
  }
  return "fail";
}

double run_tolerance(double tol_abs, double tol_rel, std::span<const double> x0) {
  double n2 = 0.0;
  for (double v : x0) n2 += v * v;
  return tol_abs + tol_rel * std::sqrt(n2);
}

namespace {

double norm2(std::span<const double> z) {
  double acc = 0.0;
  for (double v : z) acc += v * v;
  return std::sqrt(acc);
}

double norm1(std::span<const double> z) {
  double acc = 0.0;
  for (double v : z) acc += std::abs(v);
  return acc;
}

void require_terminal_samples(const Trajectory& traj) {
  const double tp = traj.meta.config.t_p;
  const double t_stop = tp - traj.meta.config.eps_stop;
  bool has_stop = false, has_tp = false;
  for (const auto& s : traj.samples) {
    if (s.t == t_stop && !s.z.empty()) has_stop = true;
    if (s.t == tp) has_tp = true;
  }
  if (!has_stop || !has_tp) {
    throw AuditError("trajectory lacks the samples at T_p - eps_stop and T_p");
  }
}

}  // namespace

SettlingEvidence settling_instant(const Trajectory& traj, const SettlingOptions& opt) {
  if (!(opt.tol > 0.0)) throw AuditError("settling tolerance must be positive");
  if (traj.samples.empty()) throw AuditError("empty trajectory");
  require_terminal_samples(traj);
  const double tp = traj.meta.config.t_p;

  std::vector<std::pair<double, double>> norms;  // (t, |z|)
  for (const auto& s : traj.samples) {
    if (!s.z.empty()) norms.emplace_back(s.t, norm2(s.z));
  }

  SettlingEvidence ev;
  ev.tol = opt.tol;
  ev.window_factor = opt.window_factor;
  ev.degenerate = norms.front().second <= opt.tol;
  ev.norm_at_tp = norms.back().second;
  ev.pre_norm_floor = std::numeric_limits<double>::infinity();
  for (const auto& [t, nz] : norms) {
    if (t <= opt.window_factor * tp) ev.pre_norm_floor = std::min(ev.pre_norm_floor, nz);
  }
  if (ev.norm_at_tp <= opt.tol) {
    std::size_t i = norms.size();
    while (i > 0 && norms[i - 1].second <= opt.tol) --i;
    ev.t_settle = norms[i].first;
  }
  return ev;
}

LyapunovAudit lyapunov_audit(const Trajectory& traj, std::span<const RcdfSpec> stages, double t_p,
                             const LyapunovOptions& opt) {
  if (stages.empty()) throw AuditError("lyapunov_audit: missing eta metadata");
  LyapunovAudit audit;
  for (const auto& s : stages) {
    if (s.kind != stages.front().kind) audit.bounds_applicable = false;
  }
  const double n = static_cast<double>(stages.size());
  double eta_min = std::numeric_limits<double>::infinity(), eta_sum = 0.0;
  for (const auto& s : stages) {
    eta_min = std::min(eta_min, s.eta);
    eta_sum += s.eta;
  }
  const RcdfKind kind = stages.front().kind;

  for (const auto& s : traj.samples) {
    if (s.z.empty() || s.t >= t_p) continue;
    if (s.z.size() != stages.size()) throw AuditError("lyapunov_audit: eta count differs from the error dimension");
    LyapunovRecord r;
    r.t = s.t;
    const double tau = t_p - s.t;
    r.V = lyapunov_value(s.z);
    r.dV_analytic = lyapunov_rate(s.z, stages, tau);
    const double rv = std::sqrt(r.V);
    const double m1 = norm1(s.z) / n;
    r.a1 = rv / n;
    r.a2 = rv;
    r.lower_bound = -2.0 * eta_sum * rv * zeta(kind, rv) / tau;
    r.upper_bound = -2.0 * n * eta_min * m1 * zeta(kind, m1) / tau;
    r.upper_bound_sqrtv = -2.0 * n * eta_min * r.a1 * zeta(kind, r.a1) / tau;
    audit.records.push_back(r);
  }

  auto& rec = audit.records;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    auto& r = rec[i];
    if (i > 0 && i + 1 < rec.size()) {
      const double h1 = r.t - rec[i - 1].t;
      const double h2 = rec[i + 1].t - r.t;
      r.dV_numeric = -h2 / (h1 * (h1 + h2)) * rec[i - 1].V + (h2 - h1) / (h1 * h2) * r.V +
                     h1 / (h2 * (h1 + h2)) * rec[i + 1].V;
      r.equality_residual = std::abs(r.dV_analytic - *r.dV_numeric);
      if (r.t >= opt.residual_window_lo * t_p && r.t <= opt.residual_window_hi * t_p) {
        const double scaled = *r.equality_residual / std::max(1.0, std::abs(r.dV_analytic));
        ++audit.residual_checked;
        audit.worst_residual = std::max(audit.worst_residual, scaled);
        if (scaled > opt.residual_rel) {
          r.residual_violation = true;
          ++audit.residual_violations;
        }
      }
    }
    if (r.V < opt.v_floor || !audit.bounds_applicable) continue;
    r.audited = true;
    ++audit.audited;
    const double slack = opt.slack_abs + opt.slack_rel * std::abs(r.dV_analytic);
    const double excess = std::max(r.lower_bound - r.dV_analytic, r.dV_analytic - r.upper_bound);
    audit.worst_bound_ratio = std::max(audit.worst_bound_ratio, excess / slack);
    if (excess > slack) {
      r.bound_violation = true;
      ++audit.bound_violations;
    }
  }
  return audit;
}

// ---------------------------------------------------------------------------
// Jensen

std::string_view to_string(ConcaveFn h) {
  switch (h) {
    case ConcaveFn::Sqrt:
      return "sqrt";
    case ConcaveFn::Log1p:
      return "log1p";
    case ConcaveFn::NegSquare:
      return "neg_square";
    case ConcaveFn::NegXZetaLinear:
      return "neg_x_zeta_linear";
    case ConcaveFn::NegXZetaTan:
      return "neg_x_zeta_tan";
    case ConcaveFn::NegXZetaLogExp:
      return "neg_x_zeta_logexp";
  }
  return "?";
}

const std::vector<ConcaveFn>& all_concave_fns() {
  static const std::vector<ConcaveFn> fns{ConcaveFn::Sqrt,           ConcaveFn::Log1p,
                                          ConcaveFn::NegSquare,      ConcaveFn::NegXZetaLinear,
                                          ConcaveFn::NegXZetaTan,    ConcaveFn::NegXZetaLogExp};
  return fns;
}

std::pair<double, double> concavity_interval(ConcaveFn h) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (h) {
    case ConcaveFn::NegSquare:
      return {-inf, inf};
    case ConcaveFn::NegXZetaLogExp:
      // (x (1 - e^{-x}))'' = (2 - x) e^{-x}
      return {0.0, 2.0};
    default:
      return {0.0, inf};
  }
}

double apply(ConcaveFn h, double x) {
  switch (h) {
    case ConcaveFn::Sqrt:
      return std::sqrt(x);
    case ConcaveFn::Log1p:
      return std::log1p(x);
    case ConcaveFn::NegSquare:
      return -x * x;
    case ConcaveFn::NegXZetaLinear:
      return -x * zeta(RcdfKind::Linear, x);
    case ConcaveFn::NegXZetaTan:
      return -x * zeta(RcdfKind::Tan, x);
    case ConcaveFn::NegXZetaLogExp:
      return -x * zeta(RcdfKind::LogExp, x);
  }
  return 0.0;
}

JensenResult jensen_check(ConcaveFn h, std::span<const double> xs, std::span<const double> lambdas) {
  if (xs.empty() || xs.size() != lambdas.size()) throw DomainError("jensen_check: need one weight per point");
  double wsum = 0.0;
  for (double l : lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw DomainError("jensen_check: weights must be non-negative");
    wsum += l;
  }
  if (std::abs(wsum - 1.0) > 1e-12 * static_cast<double>(xs.size())) {
    throw DomainError("jensen_check: weights must sum to 1");
  }
  const auto [lo, hi] = concavity_interval(h);
  double mean = 0.0, lhs = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] >= lo && xs[i] <= hi)) throw DomainError("jensen_check: point outside the concavity interval");
    mean += lambdas[i] * xs[i];
    lhs += lambdas[i] * apply(h, xs[i]);
  }
  mean = std::clamp(mean, lo, hi);
  JensenResult r;
  r.gap = apply(h, mean) - lhs;
  r.holds = lhs <= apply(h, mean) + 1e-12;
  return r;
}

// ---------------------------------------------------------------------------

ControlVanishing control_vanishing_check(const Trajectory& traj, double tol) {
  const double tp = traj.meta.config.t_p;
  const double t_stop = tp - traj.meta.config.eps_stop;
  ControlVanishing cv;
  bool window = false, switch_sample = false;
  cv.zero_after_tp = true;
  for (const auto& s : traj.samples) {
    if (s.t < tp) {
      cv.max_u = std::max(cv.max_u, std::abs(s.u));
      if (s.t >= 0.95 * tp) {
        window = true;
        cv.max_terminal_u = std::max(cv.max_terminal_u, std::abs(s.u));
      }
      if (s.t == t_stop) {
        switch_sample = true;
        cv.u_at_switch = std::abs(s.u);
      }
    } else if (s.u != 0.0) {
      cv.zero_after_tp = false;
    }
  }
  if (!window || !switch_sample) throw AuditError("control_vanishing_check: missing terminal window samples");
  cv.terminal_ratio = cv.max_u > 0.0 ? cv.max_terminal_u / cv.max_u : 0.0;
  cv.within_tolerance = cv.u_at_switch <= 10.0 * tol;
  return cv;
}

std::optional<std::string> tolerance_mismatch(const SimConfig& cfg, double tol) {
  double xinf = 1.0;
  for (double v : cfg.x0) xinf = std::max(xinf, std::abs(v));
  const double floor = 10.0 * (cfg.atol + cfg.rtol * xinf);
  if (tol >= floor) return std::nullopt;
  std::ostringstream os;
  os << "tolerance mismatch: settling tolerance " << tol << " is below the integration error floor " << floor
     << " (10 * (atol + rtol * max(1, |x0|_inf))); tighten rtol/atol or loosen tol_abs";
  return os.str();
}

unsigned sweep_threads(unsigned requested) {
  unsigned n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PSIS_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

SweepReport sweep_initial_conditions(const PlantModel& plant, const Controller& ctrl, const SimConfig& base,
                                     std::span<const double> base_x0, std::span<const double> scales,
                                     const SweepOptions& opt) {
  SweepReport report;
  report.runs.resize(scales.size());
  const double tp = ctrl.t_p();

  auto run_one = [&](std::size_t i) {
    SweepRun& run = report.runs[i];
    run.scale = scales[i];
    run.x0.assign(base_x0.begin(), base_x0.end());
    for (auto& v : run.x0) v *= run.scale;
    SimConfig cfg = base;
    cfg.x0 = run.x0;
    try {
      Trajectory traj = run_simulation(plant, ctrl, cfg);
      SettlingOptions so{run_tolerance(opt.tol_abs, opt.tol_rel, run.x0), opt.window_factor};
      run.evidence = settling_instant(traj, so);
      run.verdict = run.evidence->verdict();
      if (opt.keep_trajectories) run.trajectory = std::move(traj);
    } catch (const NumericalError& e) {
      run.verdict = Verdict::Fail;
      run.error = e.what();
      if (opt.keep_trajectories) run.trajectory = e.partial();
    } catch (const Error& e) {
      run.verdict = Verdict::Fail;
      run.error = e.what();
    }
  };

  const unsigned workers = std::min<unsigned>(sweep_threads(opt.threads), static_cast<unsigned>(scales.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < scales.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < scales.size(); i = next++) run_one(i);
      });
    }
  }

  bool any_fail = false, all_degenerate = !report.runs.empty();
  for (const auto& run : report.runs) {
    if (run.verdict == Verdict::Fail) any_fail = true;
    if (run.verdict != Verdict::Degenerate) all_degenerate = false;
    if (run.verdict == Verdict::Pass && run.evidence && run.evidence->t_settle) {
      report.spread = std::max(report.spread, std::abs(*run.evidence->t_settle - tp));
    }
  }
  if (any_fail || report.runs.empty()) {
    report.verdict = Verdict::Fail;
  } else if (all_degenerate) {
    report.verdict = Verdict::Degenerate;
  } else {
    report.verdict = report.spread <= opt.spread_bound * tp ? Verdict::Pass : Verdict::Fail;
  }
  return report;
}

}  // namespace psis
