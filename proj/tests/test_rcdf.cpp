#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "psis/rcdf.hpp"
#include "psis/error.hpp"

using namespace psis;

namespace {
const RcdfKind kKinds[] = {RcdfKind::Tan, RcdfKind::Linear, RcdfKind::LogExp};
}

TEST_SUITE("rcdf") {

TEST_CASE("zeta kernel values") {
  CHECK(zeta(RcdfKind::Linear, 2.0) == 2.0);
  CHECK(zeta(RcdfKind::LogExp, 0.0) == 0.0);
  CHECK(zeta(RcdfKind::Tan, 1.0) == doctest::Approx(1.5707963267948966).epsilon(1e-15));
  CHECK(zeta(RcdfKind::LogExp, 1.0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
  for (auto k : kKinds) CHECK(zeta(k, 0.0) == 0.0);
  CHECK_THROWS_AS(zeta(RcdfKind::Linear, std::numeric_limits<double>::quiet_NaN()), DomainError);
  CHECK_THROWS_AS(zeta(RcdfKind::Tan, std::numeric_limits<double>::infinity()), DomainError);
}

TEST_CASE("kind names") {
  for (auto k : kKinds) CHECK(parse_rcdf_kind(to_string(k)) == k);
  CHECK(to_string(RcdfKind::LogExp) == "logexp");
  CHECK_THROWS_AS(parse_rcdf_kind("cubic"), ConfigError);
}

TEST_CASE("zeta is odd and strictly increasing") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  for (auto k : kKinds) {
    for (int i = 0; i < 500; ++i) {
      const double v = d(rng);
      CHECK(zeta(k, -v) == -zeta(k, v));
      const double w = v + std::abs(d(rng)) * 0.01 + 1e-6;
      CHECK(zeta(k, w) > zeta(k, v));
    }
  }
}

TEST_CASE("zeta has the same order as v near zero") {
  for (auto k : kKinds) {
    for (double v : {1e-3, 1e-6}) CHECK(std::abs(zeta(k, v) / v - 1.0) < 1e-2);
  }
}

TEST_CASE("psi values and guards") {
  CHECK(psi({RcdfKind::Linear, 2.0}, 1.0, 0.0, 1.0) == 2.0);
  CHECK(psi({RcdfKind::Linear, 3.0}, 0.5, 0.5, 1.0) == 3.0);
  for (auto k : kKinds) CHECK(psi({k, 2.0}, 0.0, 0.3, 1.0) == 0.0);
  CHECK_THROWS_AS(psi({RcdfKind::Linear, 2.0}, 1.0, 1.0, 1.0), SingularityError);
  CHECK_THROWS_AS(psi({RcdfKind::Linear, 2.0}, 1.0, 1.5, 1.0), SingularityError);
  CHECK_THROWS_AS(psi({RcdfKind::Linear, 1.0}, 1.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(psi({RcdfKind::Linear, 2.0}, std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0), DomainError);
  // odd in v
  CHECK(psi({RcdfKind::Tan, 2.5}, -0.7, 0.2, 1.0) == -psi({RcdfKind::Tan, 2.5}, 0.7, 0.2, 1.0));
}

TEST_CASE("closed forms") {
  CHECK(closed_form({RcdfKind::Linear, 2.0}, 0.0, 1.0) == 1.0);
  CHECK(closed_form({RcdfKind::LogExp, 2.0}, 0.0, 1.0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(closed_form({RcdfKind::Tan, 2.0}, 0.0, 1.0) == doctest::Approx(std::tan(1.0)).epsilon(1e-15));
  for (auto k : kKinds) CHECK(closed_form({k, 2.0}, 1.0, 1.0) == 0.0);
  // (T_p - t)^eta = 2^2 = 4 > pi/2
  CHECK_THROWS_AS(closed_form({RcdfKind::Tan, 2.0}, 0.0, 2.0), DomainError);
}

TEST_CASE("closed form solves v' = -psi") {
  const double tp = 1.0;
  const double h = 1e-7 * tp;
  for (auto k : kKinds) {
    for (double eta : {1.5, 2.0, 3.7}) {
      const RcdfSpec s{k, eta};
      for (double t = 0.0; t <= 0.99 * tp; t += 0.0165) {
        const double v = closed_form(s, t, tp);
        const double fd = (closed_form(s, t + h, tp) - closed_form(s, std::max(0.0, t - h), tp)) /
                          (t + h - std::max(0.0, t - h));
        const double rhs = -psi(s, v, t, tp);
        CHECK(std::abs(fd - rhs) <= 1e-5 * std::max(std::abs(rhs), 1e-12));
        CHECK(closed_form_rate(s, t, tp) == doctest::Approx(rhs).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("terminal decay matches (T_p - t)^eta") {
  for (auto k : kKinds) {
    const RcdfSpec s{k, 2.5};
    for (double t = 0.9; t < 1.0; t += 0.00099) {
      const double ratio = closed_form(s, t, 1.0) / std::pow(1.0 - t, 2.5);
      CHECK(ratio > 0.5);
      CHECK(ratio < 1.5);
    }
  }
}

TEST_CASE("stage eta floors") {
  const std::vector<RcdfSpec> ok{{RcdfKind::Linear, 3.0}, {RcdfKind::Linear, 2.0}};
  CHECK(validate_stage_etas(ok, 2).empty());
  const std::vector<RcdfSpec> bad{{RcdfKind::Linear, 2.0}, {RcdfKind::Linear, 2.0}};
  const auto v = validate_stage_etas(bad, 2);
  REQUIRE(v.size() == 1);
  CHECK(v[0].stage == 1);
  CHECK(v[0].floor == 2.0);
  CHECK(v[0].describe().find("stage 1") != std::string::npos);
  const std::vector<RcdfSpec> three{{RcdfKind::Tan, 3.5}, {RcdfKind::Tan, 2.5}, {RcdfKind::Tan, 1.5}};
  CHECK(validate_stage_etas(three, 3).empty());
  CHECK_THROWS_AS(validate_stage_etas(three, 2), ConfigError);
}

}
