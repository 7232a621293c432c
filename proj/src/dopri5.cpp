#include "psis/dopri5.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace psis {

namespace {

constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// PI controller constants (Hairer, Norsett & Wanner)
constexpr double kSafety = 0.9;
constexpr double kBeta = 0.04;
constexpr double kExpo1 = 0.2 - kBeta * 0.75;
constexpr double kFacMin = 0.2;   // h_new >= 0.2 h
constexpr double kFacMax = 10.0;  // h_new <= 10 h

std::string underflow_message(double t, double h) {
  std::ostringstream os;
  os.precision(17);
  os << "step size underflow at t = " << t << " (h = " << h << ")";
  return os.str();
}

}  // namespace

StepSizeUnderflow::StepSizeUnderflow(double t, double h) : Error(underflow_message(t, h)), t_(t), h_(h) {}

Dopri5::Dopri5(Rhs rhs, Options options) : rhs_(std::move(rhs)), opt_(options) {
  if (!(opt_.rtol > 0.0) || !(opt_.atol > 0.0)) throw DomainError("Dopri5: tolerances must be positive");
  if (!(opt_.max_step > 0.0)) throw DomainError("Dopri5: max_step must be positive");
}

void Dopri5::eval(double t, std::span<const double> y, std::span<double> dy) {
  ++stats_.rhs_evals;
  rhs_(t, y, dy);
}

void Dopri5::reset(double t, std::span<const double> y) {
  dim_ = y.size();
  t_ = t_prev_ = t;
  y_.assign(y.begin(), y.end());
  for (auto* v : {&y_new_, &tmp_, &k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_}) v->assign(dim_, 0.0);
  cont_.assign(5 * dim_, 0.0);
  err_old_ = 1e-4;
  last_rejected_ = false;
  eval(t_, y_, k1_);
  h_ = opt_.initial_step > 0.0 ? opt_.initial_step : initial_step();
}

double Dopri5::initial_step() {
  // Hairer's starting-step heuristic
  double dnf = 0.0, dny = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double sk = opt_.atol + opt_.rtol * std::abs(y_[i]);
    dnf += (k1_[i] / sk) * (k1_[i] / sk);
    dny += (y_[i] / sk) * (y_[i] / sk);
  }
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
  h = std::min(h, opt_.max_step);
  for (std::size_t i = 0; i < dim_; ++i) tmp_[i] = y_[i] + h * k1_[i];
  eval(t_ + h, tmp_, k2_);
  double der2 = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    const double sk = opt_.atol + opt_.rtol * std::abs(y_[i]);
    const double d = (k2_[i] - k1_[i]) / sk;
    der2 += d * d;
  }
  der2 = std::sqrt(der2 / std::max<std::size_t>(dim_, 1)) / h;
  const double der12 = std::max(std::abs(der2), std::sqrt(dnf / std::max<std::size_t>(dim_, 1)));
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, opt_.max_step});
}

void Dopri5::step(double t_limit) {
  if (!(t_limit > t_)) throw DomainError("Dopri5::step: limit must lie ahead of the current time");
  const double remaining_total = t_limit - t_;
  for (;;) {
    double h = std::min({h_, opt_.max_step, remaining_total});
    bool lands = h >= remaining_total;
    // Avoid leaving a sliver in front of the limit.
    if (!lands && remaining_total - h < 1e-3 * h) {
      h = remaining_total;
      lands = true;
    }
    const double ulp_floor = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t_));
    if (h < ulp_floor && !lands) throw StepSizeUnderflow(t_, h);

    const auto n = dim_;
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * a21 * k1_[i];
    eval(t_ + c2 * h, tmp_, k2_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    eval(t_ + c3 * h, tmp_, k3_);
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y_[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
    eval(t_ + c4 * h, tmp_, k4_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
    eval(t_ + c5 * h, tmp_, k5_);
    for (std::size_t i = 0; i < n; ++i)
      tmp_[i] = y_[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
    const double t_new = lands ? t_limit : t_ + h;
    eval(t_new, tmp_, k6_);
    for (std::size_t i = 0; i < n; ++i)
      y_new_[i] = y_[i] + h * (a71 * k1_[i] + a73 * k3_[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
    eval(t_new, y_new_, k7_);

    double err = 0.0, err_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
      const double sk = opt_.atol + opt_.rtol * std::max(std::abs(y_[i]), std::abs(y_new_[i]));
      err += (e / sk) * (e / sk);
      err_max = std::max(err_max, std::abs(e));
    }
    err = n > 0 ? std::sqrt(err / static_cast<double>(n)) : 0.0;
    if (!std::isfinite(err)) err = 1e10;

    const double fac11 = std::pow(std::max(err, 1e-300), kExpo1);
    if (err <= 1.0) {
      double fac = fac11 / std::pow(err_old_, kBeta);
      fac = std::clamp(fac / kSafety, 1.0 / kFacMax, 1.0 / kFacMin);
      double h_new = h / fac;
      if (last_rejected_) h_new = std::min(h_new, h);
      err_old_ = std::max(err, 1e-4);
      last_rejected_ = false;

      // dense output coefficients
      for (std::size_t i = 0; i < n; ++i) {
        const double ydiff = y_new_[i] - y_[i];
        const double bspl = h * k1_[i] - ydiff;
        cont_[i] = y_[i];
        cont_[n + i] = ydiff;
        cont_[2 * n + i] = bspl;
        cont_[3 * n + i] = ydiff - h * k7_[i] - bspl;
        cont_[4 * n + i] = h * (d1 * k1_[i] + d3 * k3_[i] + d4 * k4_[i] + d5 * k5_[i] + d6 * k6_[i] + d7 * k7_[i]);
      }
      t_prev_ = t_;
      t_ = t_new;
      std::swap(y_, y_new_);
      std::swap(k1_, k7_);
      // keep the proposal for the next call even when this step was clipped
      h_ = lands ? std::max(h_new, h_) : h_new;
      ++stats_.accepted;
      stats_.error_sum += err_max;
      return;
    }
    h_ = h / std::min(1.0 / kFacMin, fac11 / kSafety);
    last_rejected_ = true;
    ++stats_.rejected;
  }
}

void Dopri5::dense(double t, std::span<double> out) const {
  const double h = t_ - t_prev_;
  const double theta = h > 0.0 ? (t - t_prev_) / h : 1.0;
  const double theta1 = 1.0 - theta;
  const auto n = dim_;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = cont_[i] +
             theta * (cont_[n + i] + theta1 * (cont_[2 * n + i] + theta * (cont_[3 * n + i] + theta1 * cont_[4 * n + i])));
  }
}

}  // namespace psis
