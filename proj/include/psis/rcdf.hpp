#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace psis {

/// Reference convergence differential functions psi(v, t) = eta * zeta(v) / (T_p - t).
/// The solution of v' = -psi(v, t) reaches zero exactly at t = T_p.
enum class RcdfKind {
  Tan,     ///< zeta(v) = (v^2 + 1) * arctan(v)
  Linear,  ///< zeta(v) = v
  LogExp,  ///< zeta(v) = (1 - exp(-|v|)) * sign(v)
};

struct RcdfSpec {
  RcdfKind kind = RcdfKind::Linear;
  double eta = 2.0;

  friend bool operator==(const RcdfSpec&, const RcdfSpec&) = default;
};

/// "tan" | "linear" | "logexp"
std::string_view to_string(RcdfKind kind);
/// Throws ConfigError on an unknown name.
RcdfKind parse_rcdf_kind(std::string_view name);

/// Odd, strictly increasing kernel. Total on finite inputs; sign(0) := 0.
double zeta(RcdfKind kind, double v);

/// eta * zeta(v) / (T_p - t). Requires 0 <= t < T_p and eta > 1.
double psi(const RcdfSpec& spec, double v, double t, double t_p);

/// Exact solution of v' = -psi(v, t) vanishing at t = T_p:
/// Tan -> tan((T_p - t)^eta), Linear -> (T_p - t)^eta, LogExp -> ln(1 + (T_p - t)^eta).
/// The Tan form needs (T_p - t)^eta < pi/2.
double closed_form(const RcdfSpec& spec, double t, double t_p);

/// d/dt of closed_form, used by oracles that need the initial slope.
double closed_form_rate(const RcdfSpec& spec, double t, double t_p);

struct EtaViolation {
  int stage = 0;       // 1-based
  double eta = 0.0;
  double floor = 0.0;  // eta must be strictly greater than this

  std::string describe() const;
};

/// Checks eta_i > n + 1 - i for every stage. An empty result means ok.
/// Throws ConfigError when specs.size() != n.
std::vector<EtaViolation> validate_stage_etas(std::span<const RcdfSpec> specs, int n);

}  // namespace psis
