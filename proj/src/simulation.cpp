#include "psis/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "psis/dopri5.hpp"

namespace psis {

int plant_order(const PlantModel& plant) {
  return std::visit(
      [](const auto& p) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, IntegratorChain>) {
          return p.n;
        } else {
          return 2;
        }
      },
      plant);
}

void validate(const PlantModel& plant) {
  if (const auto* chain = std::get_if<IntegratorChain>(&plant)) {
    if (chain->n < 1) throw ConfigError("integrator chain order must be >= 1");
    return;
  }
  const auto& p = std::get<Pendulum>(plant);
  if (!(p.l > 0.0) || !(p.m > 0.0) || !(p.g > 0.0)) throw ConfigError("pendulum l, m, g must be positive");
  if (!(p.k >= 0.0)) throw ConfigError("pendulum friction k must be non-negative");
}

std::vector<double> plant_rhs(const PlantModel& plant, std::span<const double> x, double u) {
  const auto n = static_cast<std::size_t>(plant_order(plant));
  if (x.size() != n) {
    throw ConfigError("plant of order " + std::to_string(n) + " given a state of size " + std::to_string(x.size()));
  }
  std::vector<double> dx(n);
  std::copy(x.begin() + 1, x.end(), dx.begin());
  dx[n - 1] = u;
  return dx;
}

double torque_map(const Pendulum& p, std::span<const double> x, double u) {
  return p.m * p.l * p.l * ((p.g / p.l) * std::sin(x[0]) + (p.k / p.m) * x[1] + u);
}

std::array<double, 2> pendulum_raw_rhs(const Pendulum& p, std::span<const double> x, double torque) {
  if (x.size() != 2) throw ConfigError("pendulum state must have two entries");
  return {x[1], -(p.g / p.l) * std::sin(x[0]) - (p.k / p.m) * x[1] + torque / (p.m * p.l * p.l)};
}

double pendulum_energy(const Pendulum& p, std::span<const double> x) {
  return 0.5 * p.m * p.l * p.l * x[1] * x[1] + p.m * p.g * p.l * (1.0 - std::cos(x[0]));
}

std::string_view to_string(IntegrationMode mode) {
  return mode == IntegrationMode::Direct ? "direct" : "tau";
}

IntegrationMode parse_mode(std::string_view name) {
  if (name == "direct") return IntegrationMode::Direct;
  if (name == "tau") return IntegrationMode::TauTransformed;
  throw ConfigError("unknown integration mode '" + std::string(name) + "' (expected direct or tau)");
}

SimConfig SimConfig::defaults(double t_p, std::vector<double> x0) {
  SimConfig c;
  c.x0 = std::move(x0);
  c.t_p = t_p;
  c.t_end = 2.0 * t_p;
  c.eps_stop = 1e-9 * t_p;
  c.max_step = t_p / 1000.0;
  c.sample_dt = t_p / 500.0;
  return c;
}

void SimConfig::validate() const {
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!finite_pos(t_p)) throw ConfigError("sim: T_p must be positive");
  if (!(std::isfinite(t_end) && t_end >= t_p)) throw ConfigError("sim: t_end must be >= T_p");
  if (!finite_pos(eps_stop) || eps_stop > 1e-2 * t_p) throw ConfigError("sim: eps_stop must lie in (0, 0.01 T_p]");
  if (!finite_pos(rtol) || !finite_pos(atol)) throw ConfigError("sim: rtol and atol must be positive");
  if (rtol < 10.0 * std::numeric_limits<double>::epsilon()) {
    throw ConfigError("sim: rtol below 10 machine epsilons cannot be met");
  }
  if (!finite_pos(max_step)) throw ConfigError("sim: max_step must be positive");
  if (!finite_pos(sample_dt)) throw ConfigError("sim: sample_dt must be positive");
  if (x0.empty()) throw ConfigError("sim: x0 is empty");
  for (double v : x0) {
    if (!std::isfinite(v)) throw ConfigError("sim: x0 entries must be finite");
  }
}

std::optional<std::size_t> Trajectory::terminal_index() const {
  std::optional<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].t < meta.config.t_p) idx = i;
  }
  return idx;
}

double lyapunov_value(std::span<const double> z) {
  double v = 0.0;
  for (double zi : z) v += zi * zi;
  return v;
}

double lyapunov_rate(std::span<const double> z, std::span<const RcdfSpec> stages, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double a = std::abs(z[i]);
    acc += 2.0 * stages[i].eta * a * zeta(stages[i].kind, a);
  }
  return -acc / s;
}

namespace {

/// x' in chain coordinates given the state and the (equivalent) control.
using PlantFn = std::function<void(std::span<const double> x, double u, std::span<double> dx)>;

PlantFn linearized_plant(const PlantModel& plant) {
  const int n = plant_order(plant);
  return [n](std::span<const double> x, double u, std::span<double> dx) {
    for (int i = 0; i + 1 < n; ++i) dx[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i + 1)];
    dx[static_cast<std::size_t>(n - 1)] = u;
  };
}

class Recorder {
 public:
  Recorder(const Controller& ctrl, const SimConfig& cfg) : ctrl_(ctrl), z_(static_cast<std::size_t>(ctrl.order())) {
    traj_.meta.config = cfg;
    traj_.meta.stages = ctrl.config().stages;
  }

  void pre(double t, std::span<const double> x) {
    if (!traj_.samples.empty() && t <= traj_.samples.back().t) return;
    Sample s;
    s.t = t;
    s.x.assign(x.begin(), x.end());
    try {
      s.u = ctrl_.evaluate(x, t, z_);
    } catch (const sym::EvalError& e) {
      std::ostringstream os;
      os << "controller not evaluable at t = " << t << ": " << e.what();
      throw DivergenceError(os.str(), traj_);
    }
    s.z = z_;
    s.V = lyapunov_value(z_);
    s.dV = lyapunov_rate(z_, traj_.meta.stages, ctrl_.t_p() - t);
    traj_.samples.push_back(std::move(s));
  }

  void post(double t, std::span<const double> x) {
    if (!traj_.samples.empty() && t <= traj_.samples.back().t) return;
    Sample s;
    s.t = t;
    s.x.assign(x.begin(), x.end());
    s.u = 0.0;
    traj_.samples.push_back(std::move(s));
  }

  void add_stats(const Dopri5::Stats& st) {
    traj_.meta.steps += st.accepted;
    traj_.meta.rejected += st.rejected;
    traj_.meta.rhs_evals += st.rhs_evals;
    traj_.meta.error_estimate += st.error_sum;
  }

  Trajectory& trajectory() { return traj_; }

 private:
  const Controller& ctrl_;
  std::vector<double> z_;
  Trajectory traj_;
};

void check_inputs(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg) {
  validate(plant);
  cfg.validate();
  if (plant_order(plant) != ctrl.order()) {
    throw ConfigError("plant order " + std::to_string(plant_order(plant)) + " differs from controller order " +
                      std::to_string(ctrl.order()));
  }
  if (cfg.x0.size() != static_cast<std::size_t>(ctrl.order())) {
    throw ConfigError("x0 has " + std::to_string(cfg.x0.size()) + " entries, expected " +
                      std::to_string(ctrl.order()));
  }
  if (std::abs(cfg.t_p - ctrl.t_p()) > 1e-12 * ctrl.t_p()) {
    throw ConfigError("simulation T_p differs from the controller's T_p");
  }
}

bool all_finite(std::span<const double> y) {
  return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
}

std::string stiffness_message(const Controller& ctrl, double t, std::span<const double> y, double h) {
  std::ostringstream os;
  os.precision(6);
  os << "step size underflow before T_p - eps_stop: t = " << t << ", h = " << h;
  try {
    std::vector<double> z(static_cast<std::size_t>(ctrl.order()));
    const double u = ctrl.evaluate(y, t, z);
    os << ", |z| = " << std::sqrt(lyapunov_value(z)) << ", u = " << u;
  } catch (const Error&) {
    os << ", controller not evaluable at this point";
  }
  return os.str();
}

/// Pre-switch control evaluation for the integrator: a singular evaluation
/// poisons the stage with NaN so the step is rejected instead of aborting.
double control_or_nan(const Controller& ctrl, std::span<const double> y, double t, std::span<double> z) {
  try {
    return ctrl.evaluate(y, t, z);
  } catch (const sym::EvalError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

/// Euler hop onto T_p, then u = 0 until t_end.
void finish_after_switch(Recorder& rec, const Controller& ctrl, const SimConfig& cfg, const PlantFn& plant,
                         std::span<const double> x_stop, double t_stop) {
  const std::size_t n = x_stop.size();
  std::vector<double> z(n), dx(n), x(n);
  const double u_last = ctrl.evaluate(x_stop, t_stop, z);
  plant(x_stop, u_last, dx);
  const double hop = cfg.t_p - t_stop;
  for (std::size_t i = 0; i < n; ++i) x[i] = x_stop[i] + hop * dx[i];
  rec.post(cfg.t_p, x);
  if (!all_finite(x)) throw DivergenceError("non-finite state at T_p", rec.trajectory());
  if (cfg.t_end <= cfg.t_p) return;

  Dopri5 solver([&](double, std::span<const double> y, std::span<double> dy) { plant(y, 0.0, dy); },
                {cfg.rtol, cfg.atol, cfg.max_step, 0.0});
  solver.reset(cfg.t_p, x);
  std::vector<double> buf(n);
  auto k = static_cast<long long>(std::floor(cfg.t_p / cfg.sample_dt)) + 1;
  while (solver.t() < cfg.t_end) {
    try {
      solver.step(cfg.t_end);
    } catch (const StepSizeUnderflow& e) {
      throw StiffnessError(std::string("after T_p: ") + e.what(), rec.trajectory());
    }
    if (!all_finite(solver.y())) throw DivergenceError("non-finite state after T_p", rec.trajectory());
    for (double tk = static_cast<double>(k) * cfg.sample_dt; tk < solver.t(); tk = static_cast<double>(++k) * cfg.sample_dt) {
      if (tk <= cfg.t_p) continue;
      solver.dense(tk, buf);
      rec.post(tk, buf);
    }
  }
  rec.post(solver.t(), solver.y());
  rec.add_stats(solver.stats());
}

Trajectory simulate_direct(const Controller& ctrl, const SimConfig& cfg, const PlantFn& plant) {
  const std::size_t n = cfg.x0.size();
  const double t_stop = cfg.t_p - cfg.eps_stop;
  Recorder rec(ctrl, cfg);

  thread_local std::vector<double> zbuf;
  Dopri5 solver(
      [&](double t, std::span<const double> y, std::span<double> dy) {
        zbuf.resize(n);
        plant(y, control_or_nan(ctrl, y, t, zbuf), dy);
      },
      {cfg.rtol, cfg.atol, cfg.max_step, 0.0});
  solver.reset(0.0, cfg.x0);
  rec.pre(0.0, cfg.x0);

  std::vector<double> buf(n);
  long long k = 1;
  while (solver.t() < t_stop) {
    try {
      solver.step(t_stop);
    } catch (const StepSizeUnderflow& e) {
      rec.add_stats(solver.stats());
      throw StiffnessError(stiffness_message(ctrl, solver.t(), solver.y(), e.h()), rec.trajectory());
    }
    if (!all_finite(solver.y())) {
      rec.add_stats(solver.stats());
      std::ostringstream os;
      os << "state became non-finite at t = " << solver.t();
      throw DivergenceError(os.str(), rec.trajectory());
    }
    double tk = static_cast<double>(k) * cfg.sample_dt;
    for (; tk < solver.t() && tk < t_stop; tk = static_cast<double>(++k) * cfg.sample_dt) {
      solver.dense(tk, buf);
      rec.pre(tk, buf);
    }
    // past the last grid point: keep every step boundary up to the standoff
    if (tk >= t_stop && solver.t() < t_stop) rec.pre(solver.t(), solver.y());
  }
  rec.pre(t_stop, solver.y());
  rec.add_stats(solver.stats());

  const std::vector<double> x_stop(solver.y().begin(), solver.y().end());
  finish_after_switch(rec, ctrl, cfg, plant, x_stop, t_stop);
  return std::move(rec.trajectory());
}

}  // namespace

Trajectory simulate(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg) {
  check_inputs(plant, ctrl, cfg);
  return simulate_direct(ctrl, cfg, linearized_plant(plant));
}

Trajectory simulate_raw_pendulum(const Pendulum& p, const Controller& ctrl, const SimConfig& cfg) {
  check_inputs(PlantModel{p}, ctrl, cfg);
  PlantFn raw = [p](std::span<const double> x, double u, std::span<double> dx) {
    const auto d = pendulum_raw_rhs(p, x, torque_map(p, x, u));
    dx[0] = d[0];
    dx[1] = d[1];
  };
  return simulate_direct(ctrl, cfg, raw);
}

Trajectory simulate_tau(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg,
                        std::optional<double> tau_end) {
  check_inputs(plant, ctrl, cfg);
  const PlantFn f = linearized_plant(plant);
  const std::size_t n = cfg.x0.size();
  const double tp = cfg.t_p;
  const double t_stop = tp - cfg.eps_stop;
  const double tau_stop = std::log(tp / cfg.eps_stop);
  if (tau_end && !(*tau_end > 0.0)) throw ConfigError("tau_end must be positive");
  const bool terminal = !tau_end || *tau_end >= tau_stop;
  const double tau_final = terminal ? tau_stop : *tau_end;
  const double t_final = terminal ? t_stop : tp - tp * std::exp(-tau_final);

  // t(tau) = T_p - s with s = T_p e^{-tau}; the factor uses the rounded T_p - t
  // so that it matches what the controller sees.
  auto time_of = [tp](double tau) { return tp - tp * std::exp(-tau); };

  Recorder rec(ctrl, cfg);
  thread_local std::vector<double> zbuf;
  Dopri5 solver(
      [&](double tau, std::span<const double> y, std::span<double> dy) {
        zbuf.resize(n);
        const double t = time_of(tau);
        f(y, control_or_nan(ctrl, y, t, zbuf), dy);
        const double s = tp - t;
        for (auto& v : dy) v *= s;
      },
      {cfg.rtol, cfg.atol, 1.0, 0.0});
  solver.reset(0.0, cfg.x0);
  rec.pre(0.0, cfg.x0);

  std::vector<double> buf(n);
  long long k = 1;
  while (solver.t() < tau_final) {
    try {
      solver.step(tau_final);
    } catch (const StepSizeUnderflow& e) {
      rec.add_stats(solver.stats());
      throw StiffnessError(stiffness_message(ctrl, time_of(solver.t()), solver.y(), e.h()), rec.trajectory());
    }
    if (!all_finite(solver.y())) {
      rec.add_stats(solver.stats());
      throw DivergenceError("state became non-finite in tau mode", rec.trajectory());
    }
    const double t_now = time_of(solver.t());
    double tk = static_cast<double>(k) * cfg.sample_dt;
    for (; tk < t_now && tk < t_final; tk = static_cast<double>(++k) * cfg.sample_dt) {
      solver.dense(std::log(tp / (tp - tk)), buf);
      rec.pre(tk, buf);
    }
    if (tk >= t_final && solver.t() < tau_final) rec.pre(t_now, solver.y());
  }
  rec.pre(t_final, solver.y());
  rec.add_stats(solver.stats());
  if (!terminal) return std::move(rec.trajectory());

  const std::vector<double> x_stop(solver.y().begin(), solver.y().end());
  finish_after_switch(rec, ctrl, cfg, f, x_stop, t_stop);
  return std::move(rec.trajectory());
}

Trajectory run_simulation(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg) {
  return cfg.mode == IntegrationMode::Direct ? simulate(plant, ctrl, cfg) : simulate_tau(plant, ctrl, cfg);
}

}  // namespace psis
