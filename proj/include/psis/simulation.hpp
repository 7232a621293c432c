#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "psis/error.hpp"
#include "psis/synthesis.hpp"

namespace psis {

struct IntegratorChain {
  int n = 1;
};

/// x1' = x2, x2' = -(g/l) sin x1 - (k/m) x2 + T / (m l^2)
struct Pendulum {
  double l = 0.5;   // m
  double m = 0.1;   // kg
  double g = 9.81;  // m/s^2
  double k = 0.01;  // friction coefficient
};

using PlantModel = std::variant<IntegratorChain, Pendulum>;

int plant_order(const PlantModel& plant);
void validate(const PlantModel& plant);

/// Closed-loop right-hand side in chain coordinates: (x2, ..., xn, u).
/// The pendulum is feedback-linearized, so it also reduces to (x2, u).
std::vector<double> plant_rhs(const PlantModel& plant, std::span<const double> x, double u);

/// Torque that realizes x2' = u on the physical pendulum.
double torque_map(const Pendulum& p, std::span<const double> x, double u);

/// Raw pendulum dynamics driven by a torque.
std::array<double, 2> pendulum_raw_rhs(const Pendulum& p, std::span<const double> x, double torque);

/// m l^2 x2^2 / 2 + m g l (1 - cos x1)
double pendulum_energy(const Pendulum& p, std::span<const double> x);

enum class IntegrationMode { Direct, TauTransformed };

std::string_view to_string(IntegrationMode mode);
IntegrationMode parse_mode(std::string_view name);

struct SimConfig {
  std::vector<double> x0;
  double t_p = 1.0;
  double t_end = 1.0;
  double eps_stop = 1e-9;  // terminal standoff before T_p
  double rtol = 1e-9;
  double atol = 1e-12;
  double max_step = 1e-3;
  IntegrationMode mode = IntegrationMode::Direct;
  double sample_dt = 2e-3;

  /// Defaults scaled to T_p: eps_stop = 1e-9 T_p, max_step = T_p / 1000,
  /// sample_dt = T_p / 500, t_end = 2 T_p.
  static SimConfig defaults(double t_p, std::vector<double> x0);

  void validate() const;
};

struct Sample {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> z;  // empty for t >= T_p
  double u = 0.0;
  std::optional<double> V;
  std::optional<double> dV;  // analytic: -sum 2 eta_i |z_i| zeta(|z_i|) / (T_p - t)
};

struct TrajectoryMeta {
  SimConfig config;
  std::vector<RcdfSpec> stages;
  std::size_t steps = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
  /// Accumulated local error estimates; a crude bound on the global error.
  double error_estimate = 0.0;
};

struct Trajectory {
  std::vector<Sample> samples;
  TrajectoryMeta meta;

  std::size_t order() const { return samples.empty() ? 0 : samples.front().x.size(); }
  /// Index of the last sample with t < T_p (the T_p - eps_stop sample).
  std::optional<std::size_t> terminal_index() const;
};

/// Base for integration failures; keeps the samples gathered so far.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, Trajectory partial)
      : Error(what), partial_(std::make_shared<Trajectory>(std::move(partial))) {}
  const Trajectory& partial() const { return *partial_; }

 private:
  std::shared_ptr<Trajectory> partial_;
};

/// Step size collapsed before reaching T_p - eps_stop.
class StiffnessError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The state became non-finite.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// V = sum z_i^2 and its closed-loop derivative for one error vector.
double lyapunov_value(std::span<const double> z);
double lyapunov_rate(std::span<const double> z, std::span<const RcdfSpec> stages, double s);

/// Direct-time integration: adaptive Dormand-Prince up to T_p - eps_stop,
/// an Euler hop of eps_stop onto T_p with the last control, then u = 0 up to t_end.
Trajectory simulate(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg);

/// Integration in tau = -ln((T_p - t) / T_p), where dx/dtau = (T_p - t) f(x, t).
/// tau_end defaults to the tau of T_p - eps_stop; a smaller value stops early
/// (no terminal hop, no post-T_p segment).
Trajectory simulate_tau(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg,
                        std::optional<double> tau_end = std::nullopt);

/// Dispatches on cfg.mode.
Trajectory run_simulation(const PlantModel& plant, const Controller& ctrl, const SimConfig& cfg);

/// Cross-check path: integrates the raw pendulum equations driven by
/// torque_map(x, u(x, t)) instead of the linearized form.
Trajectory simulate_raw_pendulum(const Pendulum& plant, const Controller& ctrl, const SimConfig& cfg);

}  // namespace psis
