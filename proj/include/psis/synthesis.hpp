#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psis/expr.hpp"
#include "psis/rcdf.hpp"

namespace psis {

struct SynthesisConfig {
  int n = 1;         // chain order
  double c = 0.0;    // constant setpoint for x1
  double t_p = 1.0;  // prescribed settling instant
  std::vector<RcdfSpec> stages;
  bool allow_mixed_kinds = false;
};

/// Throws ConfigError naming every violated constraint.
void validate(const SynthesisConfig& config);

/// psi(v, t) = eta * zeta(v) / (T_p - t) as an expression in v and t.
sym::Expr psi_expr(const RcdfSpec& spec, const sym::Expr& v, double t_p);
sym::Expr zeta_expr(RcdfKind kind, const sym::Expr& v);

/// Prescribed-instant feedback law for x_i' = x_{i+1}, x_n' = u.
/// Immutable; safe to share between threads.
class Controller {
 public:
  const SynthesisConfig& config() const { return config_; }
  int order() const { return config_.n; }
  double t_p() const { return config_.t_p; }

  /// Pre-switch law x_{n+1,d}, valid on 0 <= t < T_p.
  const sym::Expr& u_expr() const { return u_; }
  /// x_{2,d} .. x_{n+1,d}
  std::span<const sym::Expr> desired() const { return desired_; }
  /// z_1 .. z_n
  std::span<const sym::Expr> errors() const { return errors_; }

  /// u(x, t): the synthesized law before T_p and exactly 0 from T_p on.
  double control(std::span<const double> x, double t) const;

  /// z(x, t); throws SingularityError for t >= T_p.
  std::vector<double> error_coordinates(std::span<const double> x, double t) const;

  /// Pre-switch control and error coordinates in one pass (t < T_p).
  /// Returns u; fills z (n entries).
  double evaluate(std::span<const double> x, double t, std::span<double> z) const;

  /// Same error coordinates, but the input is held at zero. Used to check
  /// that the verifier rejects an uncontrolled run.
  Controller with_zero_control() const;

  /// Printable aliases: z_i for the error subexpressions and T_p for the constant.
  std::vector<sym::Alias> aliases() const;

 private:
  friend Controller synthesize(const SynthesisConfig& config);

  void compile();

  SynthesisConfig config_;
  sym::Expr u_;
  std::vector<sym::Expr> desired_;
  std::vector<sym::Expr> errors_;
  // roots: u, z_1 .. z_n
  std::shared_ptr<const sym::Program> program_;
};

/// Backstepping recursion: z1 = x1 - c, x_{2,d} = -psi_1,
/// x_{i+1,d} = d/dt x_{i,d} - z_{i-1} - psi_i, u = x_{n+1,d}.
Controller synthesize(const SynthesisConfig& config);

inline double eval_control(const Controller& ctrl, std::span<const double> x, double t) {
  return ctrl.control(x, t);
}

inline std::vector<double> error_coordinates(const Controller& ctrl, std::span<const double> x, double t) {
  return ctrl.error_coordinates(x, t);
}

}  // namespace psis
