#include "psis/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "psis/io.hpp"
#include "psis/verification.hpp"

namespace psis {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (item.empty() || used != item.size() || !std::isfinite(v)) {
      throw ConfigError("--scales: cannot parse '" + item + "' as a real");
    }
    out.push_back(v);
  }
  if (out.empty() || (!text.empty() && text.back() == ',')) throw ConfigError("--scales: expected s1,s2,...");
  return out;
}

std::string run_id(const ExperimentConfig& cfg) {
  const std::string text = emit_config(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

ExperimentConfig load_effective(const CliOptions& opt) {
  ExperimentConfig cfg = load_config(opt.config_path);
  if (opt.mode) cfg.sim.mode = *opt.mode;
  if (opt.scales) cfg.verify.scales = *opt.scales;
  validate(cfg);
  return cfg;
}

Controller build_controller(const ExperimentConfig& cfg) {
  Controller ctrl = synthesize(cfg.synthesis);
  return cfg.verify.force_zero_control ? ctrl.with_zero_control() : ctrl;
}

void refuse_existing(const CliOptions& opt, std::initializer_list<std::string> paths) {
  if (!opt.no_clobber) return;
  for (const auto& p : paths) {
    if (fs::exists(p)) throw OutputError("refusing to overwrite " + p + " (--no-clobber)");
  }
}

std::string path_stem(const std::string& csv) {
  fs::path p(csv);
  return (p.parent_path() / p.stem()).string();
}

ordered_json stats_json(const TrajectoryMeta& m) {
  return {{"steps", m.steps}, {"rejected", m.rejected}, {"rhs_evals", m.rhs_evals}, {"error_estimate", m.error_estimate}};
}

ordered_json opt_real(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json settling_json(const SettlingEvidence& ev) {
  return {{"t_settle", opt_real(ev.t_settle)},
          {"pre_norm_floor", ev.pre_norm_floor},
          {"norm_at_Tp", ev.norm_at_tp},
          {"tol", ev.tol},
          {"window_factor", ev.window_factor},
          {"degenerate", ev.degenerate},
          {"no_early_convergence", ev.no_early_convergence()},
          {"reaches_zero", ev.reaches_zero()},
          {"verdict", std::string(to_string(ev.verdict()))}};
}

ordered_json lyapunov_json(const LyapunovAudit& a) {
  return {{"violations", a.bound_violations + a.residual_violations},
          {"bound_violations", a.bound_violations},
          {"residual_violations", a.residual_violations},
          {"audited", a.audited},
          {"residual_checked", a.residual_checked},
          {"worst_residual", a.worst_residual},
          {"worst_bound_ratio", a.worst_bound_ratio},
          {"bounds_applicable", a.bounds_applicable},
          {"verdict", a.passes() ? "pass" : "fail"}};
}

ordered_json vanishing_json(const ControlVanishing& cv) {
  return {{"max_terminal_u", cv.max_terminal_u}, {"max_u", cv.max_u},
          {"u_at_switch", cv.u_at_switch},       {"terminal_ratio", cv.terminal_ratio},
          {"within_tolerance", cv.within_tolerance}, {"zero_after_tp", cv.zero_after_tp},
          {"verdict", cv.passes() ? "pass" : "fail"}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string report_text(ordered_json report, const CliOptions& opt, std::chrono::steady_clock::time_point t0) {
  // wall time would break byte-identical reports, so it rides with the timestamp flag
  if (opt.timestamp) report["wall_time_s"] = seconds_since(t0);
  return report.dump(2) + "\n";
}

void write_partial(const NumericalError& e, const ExperimentConfig& cfg, const CliOptions& opt, std::ostream& err) {
  const std::string path = cfg.output.csv + ".partial";
  try {
    write_text(path, trajectory_csv(e.partial()), opt.no_clobber);
    err << "partial trajectory kept in " << path << "\n";
  } catch (const OutputError& oe) {
    err << oe.what() << "\n";
  }
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const OutputError& e) {
    err << "output error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace

int cmd_synthesize(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_effective(opt);
    const Controller ctrl = build_controller(cfg);
    const auto& syn = cfg.synthesis;
    out << "n = " << syn.n << "\n";
    out << "c = " << format_real(syn.c) << "\n";
    out << "T_p = " << format_real(syn.t_p) << "\n";
    for (int i = 1; i <= syn.n; ++i) {
      const auto& st = syn.stages[static_cast<std::size_t>(i - 1)];
      out << "stage " << i << ": " << to_string(st.kind) << ", eta = " << format_real(st.eta)
          << " (floor " << syn.n + 1 - i << ")\n";
    }
    const auto aliases = ctrl.aliases();
    auto errs = ctrl.errors();
    for (std::size_t i = 0; i < errs.size(); ++i) {
      out << "z" << i + 1 << " = " << sym::to_string(errs[i]) << "\n";
    }
    out << "u = " << sym::to_string(ctrl.u_expr(), aliases) << "\n";
    // expanded over z1 and (T_p - t), the layout used when the law is written out by hand
    const std::vector<sym::Expr> atoms{aliases[0].pattern, aliases[1].pattern};
    const auto terms = sym::expand(ctrl.u_expr(), atoms);
    out << "u (expanded) = " << sym::to_string(terms, std::span<const sym::Alias>(aliases.data(), 2)) << "\n";
    return static_cast<int>(kExitPass);
  });
}

int cmd_simulate(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = load_effective(opt);
    const Controller ctrl = build_controller(cfg);
    refuse_existing(opt, {cfg.output.csv, cfg.output.svg, cfg.output.report});
    Trajectory traj;
    try {
      traj = run_simulation(cfg.plant, ctrl, cfg.sim);
    } catch (const NumericalError& e) {
      write_partial(e, cfg, opt, err);
      throw;
    }
    write_text(cfg.output.csv, trajectory_csv(traj), opt.no_clobber);
    SvgOptions svg;
    svg.timestamp = opt.timestamp;
    svg.title = "T_p = " + format_real(cfg.synthesis.t_p) + " s";
    write_text(cfg.output.svg, trajectory_svg(traj, cfg.plant, svg), opt.no_clobber);

    const auto& last = traj.samples.back();
    ordered_json report;
    report["run_id"] = run_id(cfg);
    report["command"] = "simulate";
    report["config"] = emit_config(cfg);
    report["files"] = {{"csv", cfg.output.csv}, {"svg", cfg.output.svg}, {"report", cfg.output.report}};
    report["integrator"] = stats_json(traj.meta);
    report["samples"] = traj.samples.size();
    report["final"] = {{"t", last.t}, {"x", last.x}};
    report["verdict"] = "pass";
    write_text(cfg.output.report, report_text(report, opt, t0), opt.no_clobber);

    out << "wrote " << cfg.output.csv << " (" << traj.samples.size() << " samples, " << traj.meta.steps
        << " steps)\n";
    return static_cast<int>(kExitPass);
  });
}

int cmd_verify(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = load_effective(opt);
    const Controller ctrl = build_controller(cfg);
    refuse_existing(opt, {cfg.output.report});
    const double tol = run_tolerance(cfg.verify.tol_abs, cfg.verify.tol_rel, cfg.sim.x0);
    const auto mismatch = tolerance_mismatch(cfg.sim, tol);
    if (mismatch) err << *mismatch << "\n";

    Trajectory traj;
    try {
      traj = run_simulation(cfg.plant, ctrl, cfg.sim);
    } catch (const NumericalError& e) {
      write_partial(e, cfg, opt, err);
      throw;
    }
    const SettlingEvidence ev = settling_instant(traj, {tol, cfg.verify.window_factor});
    const LyapunovAudit audit = lyapunov_audit(traj, cfg.synthesis.stages, cfg.synthesis.t_p);
    const ControlVanishing cv = control_vanishing_check(traj, tol);

    Verdict verdict = Verdict::Fail;
    if (ev.degenerate) {
      verdict = Verdict::Degenerate;
    } else if (ev.psis() && audit.passes() && cv.passes() && !mismatch) {
      verdict = Verdict::Pass;
    }

    ordered_json report;
    report["run_id"] = run_id(cfg);
    report["command"] = "verify";
    report["config"] = emit_config(cfg);
    report["settling"] = settling_json(ev);
    report["lyapunov"] = lyapunov_json(audit);
    report["control_vanishing"] = vanishing_json(cv);
    report["tolerance_mismatch"] = mismatch ? ordered_json(*mismatch) : ordered_json(nullptr);
    report["integrator"] = stats_json(traj.meta);
    report["verdict"] = std::string(to_string(verdict));
    write_text(cfg.output.report, report_text(report, opt, t0), opt.no_clobber);

    out << "settling: t_settle = " << (ev.t_settle ? format_real(*ev.t_settle) : std::string("undefined"))
        << ", pre_norm_floor = " << format_real(ev.pre_norm_floor) << ", norm_at_Tp = " << format_real(ev.norm_at_tp)
        << ", tol = " << format_real(tol) << "\n";
    out << "lyapunov: " << audit.bound_violations << " bound and " << audit.residual_violations
        << " residual violations, worst residual " << format_real(audit.worst_residual) << "\n";
    out << "control: |u(T_p - eps_stop)| = " << format_real(cv.u_at_switch) << ", zero after T_p: "
        << (cv.zero_after_tp ? "yes" : "no") << "\n";
    out << "verdict: " << to_string(verdict) << "\n";
    return verdict == Verdict::Fail ? static_cast<int>(kExitVerifyFail) : static_cast<int>(kExitPass);
  });
}

int cmd_sweep(const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = load_effective(opt);
    const Controller ctrl = build_controller(cfg);
    const auto& scales = cfg.verify.scales;
    const std::string stem = path_stem(cfg.output.csv);
    std::vector<std::string> run_paths;
    for (std::size_t k = 0; k < scales.size(); ++k) run_paths.push_back(stem + "_s" + std::to_string(k) + ".csv");
    const std::string summary_path = stem + "_sweep.csv";
    if (opt.no_clobber) {
      for (const auto& p : run_paths) refuse_existing(opt, {p});
      refuse_existing(opt, {summary_path, cfg.output.report});
    }

    SweepOptions so;
    so.tol_abs = cfg.verify.tol_abs;
    so.tol_rel = cfg.verify.tol_rel;
    so.window_factor = cfg.verify.window_factor;
    so.spread_bound = cfg.verify.spread_bound;
    so.keep_trajectories = true;
    const SweepReport rep = sweep_initial_conditions(cfg.plant, ctrl, cfg.sim, cfg.sim.x0, scales, so);

    std::string summary = "scale,t_settle,pre_norm_floor,norm_at_Tp,verdict\n";
    ordered_json runs = ordered_json::array();
    for (std::size_t k = 0; k < rep.runs.size(); ++k) {
      const auto& run = rep.runs[k];
      std::string path = run_paths[k];
      if (run.trajectory) {
        if (!run.error.empty()) path += ".partial";
        write_text(path, trajectory_csv(*run.trajectory), opt.no_clobber);
      }
      summary += format_real(run.scale) + ",";
      if (run.evidence) {
        if (run.evidence->t_settle) summary += format_real(*run.evidence->t_settle);
        summary += "," + format_real(run.evidence->pre_norm_floor) + "," + format_real(run.evidence->norm_at_tp);
      } else {
        summary += ",,";
      }
      summary += "," + std::string(to_string(run.verdict)) + "\n";
      ordered_json r = {{"scale", run.scale}, {"x0", run.x0}, {"csv", run.trajectory ? path : std::string()}};
      r["settling"] = run.evidence ? settling_json(*run.evidence) : ordered_json(nullptr);
      r["error"] = run.error;
      r["verdict"] = std::string(to_string(run.verdict));
      runs.push_back(r);
      if (!run.error.empty()) err << "run " << k << " (scale " << format_real(run.scale) << "): " << run.error << "\n";
    }
    write_text(summary_path, summary, opt.no_clobber);

    ordered_json report;
    report["run_id"] = run_id(cfg);
    report["command"] = "sweep";
    report["config"] = emit_config(cfg);
    report["runs"] = runs;
    report["spread"] = rep.spread;
    report["spread_bound"] = cfg.verify.spread_bound * cfg.synthesis.t_p;
    report["summary_csv"] = summary_path;
    report["verdict"] = std::string(to_string(rep.verdict));
    write_text(cfg.output.report, report_text(report, opt, t0), opt.no_clobber);

    out << summary;
    out << "spread = " << format_real(rep.spread) << ", verdict: " << to_string(rep.verdict) << "\n";
    return rep.verdict == Verdict::Fail ? static_cast<int>(kExitVerifyFail) : static_cast<int>(kExitPass);
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prescribed-instant settling controllers: synthesis, simulation and verification", "psis"};
  app.require_subcommand(1);
  CliOptions opt;
  std::string scales_text, mode_text;
  for (const char* name : {"synthesize", "simulate", "verify", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required();
    sub->add_option("--scales", scales_text, "comma-separated initial-condition scales");
    sub->add_option("--mode", mode_text, "integration mode")->check(CLI::IsMember({"direct", "tau"}));
    sub->add_flag("--no-clobber", opt.no_clobber, "never overwrite existing outputs");
    sub->add_flag("--no-timestamp", "omit the timestamp comment in SVG output");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? static_cast<int>(kExitPass) : static_cast<int>(kExitConfig);
  }
  auto* sub = app.get_subcommands().front();
  opt.command = sub->get_name();
  opt.timestamp = sub->count("--no-timestamp") == 0;
  try {
    if (!scales_text.empty()) opt.scales = parse_scales(scales_text);
    if (!mode_text.empty()) opt.mode = parse_mode(mode_text);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    if (opt.command == "synthesize") return cmd_synthesize(opt, out, err);
    if (opt.command == "simulate") return cmd_simulate(opt, out, err);
    if (opt.command == "verify") return cmd_verify(opt, out, err);
    return cmd_sweep(opt, out, err);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace psis
