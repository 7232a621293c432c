#include <doctest.h>

#include <cmath>
#include <numbers>

#include "psis/dopri5.hpp"
#include "psis/simulation.hpp"

using namespace psis;

namespace {

SynthesisConfig pendulum_synthesis() {
  SynthesisConfig c;
  c.n = 2;
  c.c = 0.15;
  c.t_p = 0.5;
  c.stages = {{RcdfKind::Linear, 3.0}, {RcdfKind::Linear, 2.0}};
  return c;
}

SimConfig pendulum_sim() {
  auto cfg = SimConfig::defaults(0.5, {0.09, 0.1});
  cfg.t_end = 1.0;
  return cfg;
}

const Sample& at_time(const Trajectory& tr, double t) {
  for (const auto& s : tr.samples) {
    if (s.t == t) return s;
  }
  FAIL("no sample at t = " << t);
  return tr.samples.front();
}

}  // namespace

TEST_SUITE("simulation") {

TEST_CASE("plant right-hand sides") {
  const std::vector<double> x3{1.0, 2.0, 3.0};
  CHECK(plant_rhs(IntegratorChain{3}, x3, 4.0) == std::vector<double>{2.0, 3.0, 4.0});
  const std::vector<double> x1{5.0};
  CHECK(plant_rhs(IntegratorChain{1}, x1, 0.0) == std::vector<double>{0.0});
  CHECK_THROWS_AS(plant_rhs(IntegratorChain{2}, x3, 0.0), ConfigError);
  const Pendulum p;
  const std::vector<double> zero{0.0, 0.0};
  CHECK(pendulum_raw_rhs(p, zero, 0.0) == std::array<double, 2>{0.0, 0.0});
  CHECK(torque_map(p, zero, 0.0) == 0.0);
  const std::vector<double> x0{0.09, 0.1};
  CHECK(torque_map(p, x0, 0.0) == doctest::Approx(0.04433542838162442).epsilon(1e-14));
  const std::vector<double> side{std::numbers::pi / 2.0, 0.0};
  CHECK(torque_map(p, side, 0.0) == doctest::Approx(0.4905).epsilon(1e-14));
  // the torque realizes x2' = u on the raw model
  const std::vector<double> x{0.3, -0.7};
  const auto raw = pendulum_raw_rhs(p, x, torque_map(p, x, 1.25));
  CHECK(raw[1] == doctest::Approx(1.25).epsilon(1e-13));
}

TEST_CASE("config validation") {
  auto cfg = SimConfig::defaults(1.0, {1.0});
  CHECK(cfg.eps_stop == 1e-9);
  CHECK(cfg.max_step == 1e-3);
  CHECK(cfg.sample_dt == 2e-3);
  CHECK_NOTHROW(cfg.validate());
  cfg.t_end = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SimConfig::defaults(1.0, {1.0});
  cfg.eps_stop = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(validate(PlantModel{Pendulum{0.5, -1.0, 9.81, 0.0}}), ConfigError);
  CHECK_THROWS_AS(parse_mode("implicit"), ConfigError);
  CHECK(parse_mode("tau") == IntegrationMode::TauTransformed);
}

TEST_CASE("first-order chain tracks the closed form") {
  SynthesisConfig sc;
  sc.n = 1;
  sc.t_p = 1.0;
  sc.stages = {{RcdfKind::Linear, 2.0}};
  const Controller ctrl = synthesize(sc);
  auto cfg = SimConfig::defaults(1.0, {1.0});
  const Trajectory tr = simulate(IntegratorChain{1}, ctrl, cfg);
  for (const auto& s : tr.samples) {
    if (s.t >= 0.999) break;
    const double want = (1.0 - s.t) * (1.0 - s.t);
    CHECK(std::abs(s.x[0] - want) <= 1e-6 * want);
  }
}

TEST_CASE("trajectory layout around the switch") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  const auto cfg = pendulum_sim();
  const Trajectory tr = simulate(Pendulum{}, ctrl, cfg);
  for (std::size_t i = 1; i < tr.samples.size(); ++i) REQUIRE(tr.samples[i].t > tr.samples[i - 1].t);
  const double t_stop = cfg.t_p - cfg.eps_stop;
  const auto idx = tr.terminal_index();
  REQUIRE(idx);
  CHECK(tr.samples[*idx].t == t_stop);
  CHECK(tr.samples[*idx + 1].t == cfg.t_p);
  CHECK(tr.samples.back().t == cfg.t_end);
  for (const auto& s : tr.samples) {
    if (s.t < cfg.t_p) {
      REQUIRE(s.z.size() == 2);
      CHECK(*s.V == doctest::Approx(s.z[0] * s.z[0] + s.z[1] * s.z[1]));
    } else {
      CHECK(s.z.empty());
      CHECK_FALSE(s.V);
      CHECK(s.u == 0.0);
    }
  }
  const auto& pre = tr.samples[*idx];
  const auto& post = tr.samples[*idx + 1];
  for (int i = 0; i < 2; ++i) CHECK(std::abs(pre.x[static_cast<std::size_t>(i)] - post.x[static_cast<std::size_t>(i)]) < 1e-8);
  CHECK(std::abs(post.x[0] - 0.15) < 1e-3);
  CHECK(std::abs(post.x[1]) < 1e-3);
  CHECK(tr.meta.steps > 0);
  CHECK(tr.meta.stages.size() == 2);
}

TEST_CASE("equilibrium is invariant") {
  SynthesisConfig sc;
  sc.n = 3;
  sc.t_p = 1.0;
  sc.stages = {{RcdfKind::Tan, 4.0}, {RcdfKind::Tan, 3.0}, {RcdfKind::Tan, 2.0}};
  const Controller ctrl = synthesize(sc);
  const Trajectory tr = simulate(IntegratorChain{3}, ctrl, SimConfig::defaults(1.0, {0.0, 0.0, 0.0}));
  for (const auto& s : tr.samples) {
    for (double v : s.x) CHECK(v == 0.0);
    CHECK(s.u == 0.0);
  }
}

TEST_CASE("post-switch chain stays small") {
  SynthesisConfig sc;
  sc.n = 2;
  sc.t_p = 1.0;
  sc.stages = {{RcdfKind::Linear, 3.0}, {RcdfKind::Linear, 2.0}};
  const Controller ctrl = synthesize(sc);
  auto cfg = SimConfig::defaults(1.0, {1.0, 0.0});
  cfg.t_end = 3.0;
  const Trajectory tr = simulate(IntegratorChain{2}, ctrl, cfg);
  const auto& s = at_time(tr, 1.0);
  const double delta = std::hypot(s.x[0], s.x[1]);
  const double end = std::hypot(tr.samples.back().x[0], tr.samples.back().x[1]);
  CHECK(end <= delta * std::pow(1.0 + 2.0, 2) + 1e-300);
  CHECK(end <= 1e-3);
}

TEST_CASE("tau mode matches direct mode") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  auto cfg = pendulum_sim();
  const Trajectory direct = simulate(Pendulum{}, ctrl, cfg);
  cfg.mode = IntegrationMode::TauTransformed;
  const Trajectory tau = run_simulation(Pendulum{}, ctrl, cfg);
  std::size_t shared = 0;
  double worst = 0.0;
  std::size_t j = 0;
  for (const auto& s : direct.samples) {
    while (j < tau.samples.size() && tau.samples[j].t < s.t) ++j;
    if (j == tau.samples.size() || tau.samples[j].t != s.t) continue;
    ++shared;
    for (std::size_t i = 0; i < 2; ++i) worst = std::max(worst, std::abs(s.x[i] - tau.samples[j].x[i]));
  }
  CHECK(shared > 400);
  CHECK(worst <= 10.0 * cfg.rtol);
}

TEST_CASE("tau mode endpoint mapping") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  const Trajectory tr = simulate_tau(Pendulum{}, ctrl, pendulum_sim(), std::log(10.0));
  CHECK(tr.samples.back().t == doctest::Approx(0.45).epsilon(1e-14));
  CHECK(tr.samples.front().t == 0.0);
  CHECK_THROWS_AS(simulate_tau(Pendulum{}, ctrl, pendulum_sim(), -1.0), ConfigError);
}

TEST_CASE("raw pendulum dynamics agree with the linearized run") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  const auto cfg = pendulum_sim();
  const Trajectory lin = simulate(Pendulum{}, ctrl, cfg);
  const Trajectory raw = simulate_raw_pendulum(Pendulum{}, ctrl, cfg);
  const auto& a = at_time(lin, 0.25);
  const auto& b = at_time(raw, 0.25);
  CHECK(std::abs(a.x[0] - b.x[0]) < 1e-7);
  CHECK(std::abs(a.x[1] - b.x[1]) < 1e-7);
}

TEST_CASE("energy is conserved without torque or friction") {
  const Pendulum p{0.5, 0.1, 9.81, 0.0};
  Dopri5 solver([&](double, std::span<const double> y, std::span<double> dy) {
    const auto d = pendulum_raw_rhs(p, y, 0.0);
    dy[0] = d[0];
    dy[1] = d[1];
  }, {1e-9, 1e-12, 1e-3, 0.0});
  const std::vector<double> x0{0.4, 0.0};
  const double e0 = pendulum_energy(p, x0);
  solver.reset(0.0, x0);
  double drift = 0.0;
  while (solver.t() < 1.0) {
    solver.step(1.0);
    drift = std::max(drift, std::abs(pendulum_energy(p, solver.y()) - e0));
  }
  CHECK(drift < 1e-6 * e0);
}

TEST_CASE("dimension and T_p mismatches") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  auto cfg = pendulum_sim();
  CHECK_THROWS_AS(simulate(IntegratorChain{3}, ctrl, cfg), ConfigError);
  cfg.x0 = {0.1};
  CHECK_THROWS_AS(simulate(Pendulum{}, ctrl, cfg), ConfigError);
  cfg = pendulum_sim();
  cfg.t_p = 0.6;
  cfg.t_end = 1.2;
  CHECK_THROWS_AS(simulate(Pendulum{}, ctrl, cfg), ConfigError);
}

TEST_CASE("halving the tolerances moves x(T_p) less than the error estimate") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  auto cfg = pendulum_sim();
  cfg.rtol = 1e-7;
  cfg.atol = 1e-10;
  const Trajectory coarse = simulate(Pendulum{}, ctrl, cfg);
  cfg.rtol /= 2.0;
  cfg.atol /= 2.0;
  const Trajectory fine = simulate(Pendulum{}, ctrl, cfg);
  const auto& a = at_time(coarse, 0.5);
  const auto& b = at_time(fine, 0.5);
  const double diff = std::max(std::abs(a.x[0] - b.x[0]), std::abs(a.x[1] - b.x[1]));
  CHECK(diff <= coarse.meta.error_estimate);
}

}
