#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "psis/verification.hpp"

using namespace psis;

namespace {

SynthesisConfig chain_synthesis(std::vector<double> etas, RcdfKind kind = RcdfKind::Linear, double tp = 1.0) {
  SynthesisConfig c;
  c.n = static_cast<int>(etas.size());
  c.t_p = tp;
  for (double e : etas) c.stages.push_back({kind, e});
  return c;
}

SynthesisConfig pendulum_synthesis() {
  SynthesisConfig c = chain_synthesis({3.0, 2.0}, RcdfKind::Linear, 0.5);
  c.c = 0.15;
  return c;
}

Trajectory pendulum_run() {
  auto cfg = SimConfig::defaults(0.5, {0.09, 0.1});
  cfg.t_end = 1.0;
  return simulate(Pendulum{}, synthesize(pendulum_synthesis()), cfg);
}

Trajectory one_sample(std::vector<double> z, double t, double tp) {
  Trajectory tr;
  tr.meta.config.t_p = tp;
  Sample s;
  s.t = t;
  s.x = z;
  s.z = z;
  tr.samples.push_back(s);
  return tr;
}

}  // namespace

TEST_SUITE("verification") {

TEST_CASE("settling instant of the first-order linear run") {
  const Controller ctrl = synthesize(chain_synthesis({2.0}));
  const Trajectory tr = simulate(IntegratorChain{1}, ctrl, SimConfig::defaults(1.0, {1.0}));
  const auto ev = settling_instant(tr, {1e-4, 0.9});
  REQUIRE(ev.t_settle);
  // (1 - t)^2 = 1e-4 sits exactly on the tolerance, so either neighbouring grid point may qualify
  CHECK(std::abs(*ev.t_settle - 0.99) <= 0.002 + 1e-12);
  CHECK(ev.norm_at_tp <= 1e-4);
  CHECK(ev.pre_norm_floor == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(ev.psis());
  CHECK(ev.verdict() == Verdict::Pass);
}

TEST_CASE("equilibrium start is degenerate") {
  const Controller ctrl = synthesize(chain_synthesis({3.0, 2.0}));
  const Trajectory tr = simulate(IntegratorChain{2}, ctrl, SimConfig::defaults(1.0, {0.0, 0.0}));
  const auto ev = settling_instant(tr, {1e-4, 0.9});
  REQUIRE(ev.t_settle);
  CHECK(*ev.t_settle == 0.0);
  CHECK(ev.degenerate);
  CHECK_FALSE(ev.psis());
  CHECK(ev.verdict() == Verdict::Degenerate);
}

TEST_CASE("pendulum settles at the prescribed instant") {
  const auto ev = settling_instant(pendulum_run(), {1e-3, 0.9});
  REQUIRE(ev.t_settle);
  CHECK(*ev.t_settle >= 0.45);
  CHECK(*ev.t_settle <= 0.5);
}

TEST_CASE("uncontrolled chain does not settle") {
  const Controller off = synthesize(pendulum_synthesis()).with_zero_control();
  auto cfg = SimConfig::defaults(0.5, {0.09, 0.1});
  const Trajectory tr = simulate(IntegratorChain{2}, off, cfg);
  const auto ev = settling_instant(tr, {1e-4, 0.9});
  CHECK_FALSE(ev.t_settle);
  CHECK(ev.verdict() == Verdict::Fail);
}

TEST_CASE("missing terminal samples") {
  const Controller ctrl = synthesize(pendulum_synthesis());
  const Trajectory early = simulate_tau(Pendulum{}, ctrl, SimConfig::defaults(0.5, {0.09, 0.1}), 2.0);
  CHECK_THROWS_AS(settling_instant(early, {1e-4, 0.9}), AuditError);
  CHECK_THROWS_AS(control_vanishing_check(early, 1e-4), AuditError);
}

TEST_CASE("lyapunov audit on hand-computed samples") {
  const std::vector<RcdfSpec> one{{RcdfKind::Linear, 2.0}};
  auto a = lyapunov_audit(one_sample({0.0}, 0.5, 1.0), one, 1.0);
  REQUIRE(a.records.size() == 1);
  CHECK(a.records[0].V == 0.0);
  CHECK(a.records[0].dV_analytic == 0.0);
  CHECK(a.records[0].lower_bound == 0.0);
  CHECK(a.records[0].upper_bound == 0.0);
  CHECK_FALSE(a.records[0].audited);

  a = lyapunov_audit(one_sample({0.5}, 0.5, 1.0), one, 1.0);
  CHECK(a.records[0].dV_analytic == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(a.records[0].lower_bound == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(a.records[0].upper_bound == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(a.passes());

  const std::vector<RcdfSpec> two{{RcdfKind::Linear, 3.0}, {RcdfKind::Linear, 2.0}};
  a = lyapunov_audit(one_sample({0.3, -0.4}, 0.75, 1.0), two, 1.0);
  const auto& r = a.records[0];
  CHECK(r.dV_analytic == doctest::Approx(-4.72).epsilon(1e-14));
  CHECK(r.lower_bound == doctest::Approx(-10.0).epsilon(1e-14));
  CHECK(r.upper_bound == doctest::Approx(-3.92).epsilon(1e-14));
  CHECK(r.a1 == doctest::Approx(0.25));
  CHECK(r.a2 == doctest::Approx(0.5));
  CHECK(r.lower_bound <= r.dV_analytic);
  CHECK(r.dV_analytic <= r.upper_bound);
  CHECK(a.bound_violations == 0);

  CHECK_THROWS_AS(lyapunov_audit(one_sample({0.5}, 0.5, 1.0), {}, 1.0), AuditError);
  CHECK_THROWS_AS(lyapunov_audit(one_sample({0.5}, 0.5, 1.0), two, 1.0), AuditError);
}

TEST_CASE("lyapunov audit along closed-loop runs") {
  for (auto kind : {RcdfKind::Tan, RcdfKind::Linear, RcdfKind::LogExp}) {
    const auto sc = chain_synthesis({4.0, 3.0, 2.0}, kind);
    auto cfg = SimConfig::defaults(1.0, {0.3, -0.2, 0.1});
    cfg.sample_dt = 2e-4;
    const Trajectory tr = simulate(IntegratorChain{3}, synthesize(sc), cfg);
    const auto a = lyapunov_audit(tr, sc.stages, 1.0);
    CHECK(a.audited > 100);
    CHECK(a.residual_checked > 100);
    CHECK(a.bound_violations == 0);
    CHECK(a.residual_violations == 0);
  }
}

TEST_CASE("V is non-increasing for a single stage") {
  for (auto kind : {RcdfKind::Tan, RcdfKind::Linear, RcdfKind::LogExp}) {
    const auto sc = chain_synthesis({2.0}, kind);
    const Trajectory tr = simulate(IntegratorChain{1}, synthesize(sc), SimConfig::defaults(1.0, {-0.8}));
    // |z| may only grow by the integrator's absolute tolerance
    double prev = INFINITY;
    for (const auto& s : tr.samples) {
      if (!s.V) continue;
      CHECK(std::sqrt(*s.V) <= prev + tr.meta.config.atol);
      prev = std::sqrt(*s.V);
    }
  }
}

TEST_CASE("mixed kinds skip the bounds") {
  auto sc = chain_synthesis({3.0, 2.0});
  sc.stages[1].kind = RcdfKind::Tan;
  sc.allow_mixed_kinds = true;
  const Trajectory tr = simulate(IntegratorChain{2}, synthesize(sc), SimConfig::defaults(1.0, {1.0, 0.0}));
  const auto a = lyapunov_audit(tr, sc.stages, 1.0);
  CHECK_FALSE(a.bounds_applicable);
  CHECK(a.audited == 0);
}

TEST_CASE("jensen examples") {
  const std::vector<double> half{0.5, 0.5};
  const std::vector<double> pm{1.0, -1.0};
  auto r = jensen_check(ConcaveFn::NegSquare, pm, half);
  CHECK(r.holds);
  CHECK(r.gap == doctest::Approx(1.0));
  const std::vector<double> s04{0.0, 4.0};
  r = jensen_check(ConcaveFn::Sqrt, s04, half);
  CHECK(r.holds);
  CHECK(r.gap == doctest::Approx(std::sqrt(2.0) - 1.0));
  const std::vector<double> same{0.7, 0.7, 0.7};
  const std::vector<double> third{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  for (auto h : all_concave_fns()) {
    r = jensen_check(h, same, third);
    CHECK(r.holds);
    CHECK(std::abs(r.gap) < 1e-15);
  }
}

TEST_CASE("jensen rejects bad weights and points") {
  const std::vector<double> xs{1.0, 2.0};
  const std::vector<double> neg{1.5, -0.5};
  const std::vector<double> short_sum{0.5, 0.4};
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(jensen_check(ConcaveFn::Sqrt, xs, neg), DomainError);
  CHECK_THROWS_AS(jensen_check(ConcaveFn::Sqrt, xs, short_sum), DomainError);
  CHECK_THROWS_AS(jensen_check(ConcaveFn::Sqrt, xs, one), DomainError);
  const std::vector<double> outside{-1.0, 1.0};
  const std::vector<double> half{0.5, 0.5};
  CHECK_THROWS_AS(jensen_check(ConcaveFn::Log1p, outside, half), DomainError);
  const std::vector<double> beyond{1.0, 3.0};
  CHECK_THROWS_AS(jensen_check(ConcaveFn::NegXZetaLogExp, beyond, half), DomainError);
}

TEST_CASE("jensen holds for random weights") {
  std::mt19937_64 rng(42);
  for (auto h : all_concave_fns()) {
    const auto [lo, hi] = concavity_interval(h);
    std::uniform_real_distribution<double> d(std::max(lo, -5.0), std::min(hi, 5.0)), w(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
      std::vector<double> xs(5), ls(5);
      double sum = 0.0;
      for (int i = 0; i < 5; ++i) {
        xs[static_cast<std::size_t>(i)] = d(rng);
        sum += ls[static_cast<std::size_t>(i)] = w(rng);
      }
      for (auto& l : ls) l /= sum;
      double s2 = 0.0;
      for (double l : ls) s2 += l;
      ls[0] += 1.0 - s2;
      const auto r = jensen_check(h, xs, ls);
      CHECK(r.holds);
      CHECK(r.gap >= -1e-12);
    }
  }
}

TEST_CASE("control vanishes at the switch") {
  const Trajectory tr = pendulum_run();
  const auto cv = control_vanishing_check(tr, 1e-4);
  CHECK(cv.zero_after_tp);
  CHECK(cv.within_tolerance);
  CHECK(cv.passes());
  CHECK(cv.max_u == doctest::Approx(1.22).epsilon(1e-6));
}

TEST_CASE("eta near the floor decays more slowly") {
  auto ratio = [](std::vector<double> etas) {
    const auto sc = chain_synthesis(etas);
    const Trajectory tr = simulate(IntegratorChain{2}, synthesize(sc), SimConfig::defaults(1.0, {1.0, 0.0}));
    return control_vanishing_check(tr, 1e-4);
  };
  const auto fast = ratio({3.0, 2.0});
  const auto slow = ratio({2.1, 1.1});
  CHECK(slow.zero_after_tp);
  CHECK(slow.terminal_ratio > fast.terminal_ratio);
  CHECK(slow.u_at_switch > fast.u_at_switch);
}

TEST_CASE("tolerance mismatch diagnostic") {
  auto cfg = SimConfig::defaults(1.0, {1.0, 0.0});
  CHECK_FALSE(tolerance_mismatch(cfg, 1e-4));
  cfg.rtol = 1e-6;
  const auto msg = tolerance_mismatch(cfg, 1e-12);
  REQUIRE(msg);
  CHECK(msg->find("tolerance mismatch") != std::string::npos);
}

TEST_CASE("sweep over initial-condition scales") {
  const auto sc = chain_synthesis({3.0, 2.0});
  const Controller ctrl = synthesize(sc);
  auto base = SimConfig::defaults(1.0, {1.0, 0.0});
  const std::vector<double> x0{1.0, 0.0};
  const std::vector<double> scales{0.1, 1.0, 10.0, 100.0};
  SweepOptions opt;
  opt.threads = 4;
  const auto rep = sweep_initial_conditions(IntegratorChain{2}, ctrl, base, x0, scales, opt);
  REQUIRE(rep.runs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& run = rep.runs[i];
    CHECK(run.scale == scales[i]);
    REQUIRE(run.evidence);
    REQUIRE(run.evidence->t_settle);
    CHECK(*run.evidence->t_settle >= 0.9);
    CHECK(*run.evidence->t_settle <= 1.0);
    CHECK(run.verdict == Verdict::Pass);
  }
  CHECK(rep.spread <= 0.05);
  CHECK(rep.verdict == Verdict::Pass);

  opt.threads = 1;
  const auto serial = sweep_initial_conditions(IntegratorChain{2}, ctrl, base, x0, scales, opt);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(*serial.runs[i].evidence->t_settle == *rep.runs[i].evidence->t_settle);
    CHECK(serial.runs[i].evidence->norm_at_tp == rep.runs[i].evidence->norm_at_tp);
  }
}

TEST_CASE("sweep marks the zero scale degenerate") {
  const auto sc = chain_synthesis({3.0, 2.0});
  const std::vector<double> x0{1.0, 0.0};
  const std::vector<double> scales{0.0, 1.0};
  const auto rep = sweep_initial_conditions(IntegratorChain{2}, synthesize(sc), SimConfig::defaults(1.0, x0), x0,
                                            scales, {});
  CHECK(rep.runs[0].verdict == Verdict::Degenerate);
  CHECK(rep.runs[1].verdict == Verdict::Pass);
  CHECK(rep.verdict == Verdict::Pass);
  const std::vector<double> only_zero{0.0};
  const auto deg = sweep_initial_conditions(IntegratorChain{2}, synthesize(sc), SimConfig::defaults(1.0, x0), x0,
                                            only_zero, {});
  CHECK(deg.verdict == Verdict::Degenerate);
}

TEST_CASE("worker count honours PSIS_THREADS") {
  setenv("PSIS_THREADS", "2", 1);
  CHECK(sweep_threads(8) == 2);
  CHECK(sweep_threads(1) == 1);
  setenv("PSIS_THREADS", "junk", 1);
  CHECK(sweep_threads(3) == 3);
  unsetenv("PSIS_THREADS");
  CHECK(sweep_threads(5) == 5);
}

}
