#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "psis/error.hpp"

namespace psis {

/// Thrown when the accepted step size collapses below the resolution of t.
class StepSizeUnderflow : public Error {
 public:
  StepSizeUnderflow(double t, double h);
  double t() const noexcept { return t_; }
  double h() const noexcept { return h_; }

 private:
  double t_;
  double h_;
};

/// Dormand-Prince 5(4) with PI step-size control and 4th-order dense output.
class Dopri5 {
 public:
  using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

  struct Options {
    double rtol = 1e-9;
    double atol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    double initial_step = 0.0;  // 0 selects automatically
  };

  struct Stats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evals = 0;
    /// Sum over accepted steps of the max-norm local error estimate.
    double error_sum = 0.0;
  };

  Dopri5(Rhs rhs, Options options);

  void reset(double t, std::span<const double> y);

  /// Advances by one accepted step without passing t_limit. Lands exactly on
  /// t_limit when the proposed step reaches it.
  void step(double t_limit);

  double t() const { return t_; }
  double t_prev() const { return t_prev_; }
  double last_step() const { return t_ - t_prev_; }
  std::span<const double> y() const { return y_; }
  const Stats& stats() const { return stats_; }

  /// Interpolated state on [t_prev(), t()].
  void dense(double t, std::span<double> out) const;

 private:
  double initial_step();
  void eval(double t, std::span<const double> y, std::span<double> dy);

  Rhs rhs_;
  Options opt_;
  std::size_t dim_ = 0;
  double t_ = 0.0;
  double t_prev_ = 0.0;
  double h_ = 0.0;
  double err_old_ = 1e-4;
  bool last_rejected_ = false;
  std::vector<double> y_, y_new_, tmp_, k1_, k2_, k3_, k4_, k5_, k6_, k7_, cont_;
  Stats stats_;
};

}  // namespace psis
