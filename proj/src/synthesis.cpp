#include "psis/synthesis.hpp"

#include <cmath>
#include <sstream>

#include "psis/error.hpp"

namespace psis {

using sym::Expr;

void validate(const SynthesisConfig& config) {
  std::ostringstream problems;
  if (config.n < 1) problems << "chain order n must be >= 1; ";
  if (!(config.t_p > 0.0) || !std::isfinite(config.t_p)) problems << "T_p must be a finite positive number; ";
  if (!std::isfinite(config.c)) problems << "setpoint c must be finite; ";
  if (config.n >= 1) {
    if (config.stages.size() != static_cast<std::size_t>(config.n)) {
      problems << "expected " << config.n << " RCDF stages, got " << config.stages.size() << "; ";
    } else {
      for (const auto& v : validate_stage_etas(config.stages, config.n)) problems << v.describe() << "; ";
      if (!config.allow_mixed_kinds) {
        for (const auto& s : config.stages) {
          if (s.kind != config.stages.front().kind) {
            problems << "stages mix RCDF kinds (set allow_mixed_kinds to permit); ";
            break;
          }
        }
      }
    }
  }
  const std::string msg = problems.str();
  if (!msg.empty()) throw ConfigError(msg.substr(0, msg.size() - 2));
}

Expr zeta_expr(RcdfKind kind, const Expr& v) {
  switch (kind) {
    case RcdfKind::Tan:
      return (sym::pow(v, 2.0) + 1.0) * sym::atan(v);
    case RcdfKind::Linear:
      return v;
    case RcdfKind::LogExp:
      return (1.0 - sym::exp(-sym::abs(v))) * sym::sign(v);
  }
  return v;
}

Expr psi_expr(const RcdfSpec& spec, const Expr& v, double t_p) {
  return sym::simplify(spec.eta * zeta_expr(spec.kind, v) / (t_p - Expr::time()));
}

Controller synthesize(const SynthesisConfig& config) {
  validate(config);
  const int n = config.n;

  Controller ctrl;
  ctrl.config_ = config;

  Expr z = sym::simplify(Expr::var(1) - config.c);
  Expr xd = sym::simplify(-psi_expr(config.stages[0], z, config.t_p));
  ctrl.errors_.push_back(z);
  ctrl.desired_.push_back(xd);

  for (int i = 2; i <= n; ++i) {
    const Expr z_prev = z;
    z = sym::simplify(Expr::var(i) - xd);
    const Expr psi_i = psi_expr(config.stages[static_cast<std::size_t>(i - 1)], z, config.t_p);
    // xd depends on x_1..x_{i-1} only, so its derivative along the chain is
    // well defined with order i.
    xd = sym::simplify(sym::lie_derivative(xd, i) - z_prev - psi_i);
    ctrl.errors_.push_back(z);
    ctrl.desired_.push_back(xd);
  }
  ctrl.u_ = xd;
  ctrl.compile();
  return ctrl;
}

void Controller::compile() {
  std::vector<Expr> roots;
  roots.reserve(errors_.size() + 1);
  roots.push_back(u_);
  roots.insert(roots.end(), errors_.begin(), errors_.end());
  program_ = std::make_shared<const sym::Program>(roots);
}

double Controller::evaluate(std::span<const double> x, double t, std::span<double> z) const {
  if (x.size() != static_cast<std::size_t>(config_.n)) {
    throw ConfigError("state has " + std::to_string(x.size()) + " entries, controller order is " +
                      std::to_string(config_.n));
  }
  if (t >= config_.t_p) throw SingularityError("controller expressions evaluated at t >= T_p");
  thread_local std::vector<double> out;
  out.resize(program_->outputs());
  try {
    program_->eval(x, t, out);
  } catch (const sym::EvalError& e) {
    std::ostringstream os;
    os.precision(17);
    os << e.what() << " (node " << sym::op_name(e.op()) << ", t = " << t << ")";
    throw sym::EvalError(e.op(), os.str());
  }
  std::copy(out.begin() + 1, out.end(), z.begin());
  return out[0];
}

double Controller::control(std::span<const double> x, double t) const {
  if (t >= config_.t_p) return 0.0;
  std::vector<double> z(static_cast<std::size_t>(config_.n));
  return evaluate(x, t, z);
}

std::vector<double> Controller::error_coordinates(std::span<const double> x, double t) const {
  std::vector<double> z(static_cast<std::size_t>(config_.n));
  evaluate(x, t, z);
  return z;
}

Controller Controller::with_zero_control() const {
  Controller c = *this;
  c.u_ = Expr();
  c.desired_.back() = Expr();
  c.compile();
  return c;
}

std::vector<sym::Alias> Controller::aliases() const {
  std::vector<sym::Alias> out;
  out.push_back({Expr::constant(config_.t_p) - Expr::time(), "(T_p - t)"});
  for (std::size_t i = 0; i < errors_.size(); ++i) out.push_back({errors_[i], "z" + std::to_string(i + 1)});
  return out;
}

}  // namespace psis
