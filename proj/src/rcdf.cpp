#include "psis/rcdf.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "psis/error.hpp"

namespace psis {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string(what) + ": non-finite argument");
  }
}

void require_gain(const RcdfSpec& spec) {
  if (!(spec.eta > 1.0) || !std::isfinite(spec.eta)) {
    throw DomainError("RCDF gain eta must be a finite number > 1");
  }
}

}  // namespace

std::string_view to_string(RcdfKind kind) {
  switch (kind) {
    case RcdfKind::Tan:
      return "tan";
    case RcdfKind::Linear:
      return "linear";
    case RcdfKind::LogExp:
      return "logexp";
  }
  return "linear";
}

RcdfKind parse_rcdf_kind(std::string_view name) {
  if (name == "tan") return RcdfKind::Tan;
  if (name == "linear") return RcdfKind::Linear;
  if (name == "logexp") return RcdfKind::LogExp;
  throw ConfigError("unknown RCDF kind '" + std::string(name) +
                    "' (expected tan, linear or logexp)");
}

double zeta(RcdfKind kind, double v) {
  require_finite(v, "zeta");
  switch (kind) {
    case RcdfKind::Tan:
      return (v * v + 1.0) * std::atan(v);
    case RcdfKind::Linear:
      return v;
    case RcdfKind::LogExp: {
      if (v == 0.0) return 0.0;
      // 1 - exp(-|v|) without cancellation for small |v|
      const double mag = -std::expm1(-std::abs(v));
      return v > 0.0 ? mag : -mag;
    }
  }
  return v;
}

double psi(const RcdfSpec& spec, double v, double t, double t_p) {
  require_finite(v, "psi");
  require_finite(t, "psi");
  require_finite(t_p, "psi");
  require_gain(spec);
  if (t < 0.0) throw DomainError("psi: t must be non-negative");
  if (t >= t_p) throw SingularityError("psi: evaluated at t >= T_p");
  if (v == 0.0) return 0.0;
  return spec.eta * zeta(spec.kind, v) / (t_p - t);
}

double closed_form(const RcdfSpec& spec, double t, double t_p) {
  require_finite(t, "closed_form");
  require_finite(t_p, "closed_form");
  require_gain(spec);
  if (t < 0.0 || t > t_p) throw DomainError("closed_form: t outside [0, T_p]");
  const double w = std::pow(t_p - t, spec.eta);
  switch (spec.kind) {
    case RcdfKind::Tan:
      if (w >= std::numbers::pi / 2.0) {
        throw DomainError("closed_form: (T_p - t)^eta must stay below pi/2 for the tan kind");
      }
      return std::tan(w);
    case RcdfKind::Linear:
      return w;
    case RcdfKind::LogExp:
      return std::log1p(w);
  }
  return w;
}

double closed_form_rate(const RcdfSpec& spec, double t, double t_p) {
  const double v = closed_form(spec, t, t_p);
  if (t >= t_p) return 0.0;
  return -psi(spec, v, t, t_p);
}

std::string EtaViolation::describe() const {
  std::ostringstream os;
  os << "stage " << stage << ": eta = " << eta << " must be > " << floor;
  return os.str();
}

std::vector<EtaViolation> validate_stage_etas(std::span<const RcdfSpec> specs, int n) {
  if (n < 1 || specs.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("expected " + std::to_string(n) + " RCDF stages, got " +
                      std::to_string(specs.size()));
  }
  std::vector<EtaViolation> out;
  for (int i = 1; i <= n; ++i) {
    const double floor = static_cast<double>(n + 1 - i);
    const double eta = specs[static_cast<std::size_t>(i - 1)].eta;
    if (!(eta > floor)) out.push_back({i, eta, floor});
  }
  return out;
}

}  // namespace psis
