#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kcone/field.hpp"

namespace kcone {

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double initial_step = 0.0;  // 0 selects a step automatically
  std::size_t max_steps = 50'000'000;
  double kink_step = 1e-2;    // steps crossing a declared kink are bisected down to this
};

struct TrajectoryEvent {
  double time;
  std::string kind;
};

/// Accepted steps of a Dormand-Prince 5(4) run with continuous extension.
///
/// Forward runs have strictly increasing times starting at 0. Backward runs
/// (integrate_backward) are stored in integration order with strictly
/// decreasing negative times.
class Trajectory {
 public:
  std::vector<double> times;
  std::vector<Vector> states;
  double accepted_tol = 0.0;        // rtol used
  double requested_duration = 0.0;  // the T asked for
  int direction = 1;
  std::vector<TrajectoryEvent> events;

  std::size_t size() const { return times.size(); }
  double start_time() const { return times.front(); }
  double end_time() const { return times.back(); }
  /// Length of time actually covered.
  double duration() const { return std::abs(times.back() - times.front()); }
  bool exited_domain() const {
    return std::any_of(events.begin(), events.end(),
                       [](const TrajectoryEvent& e) { return e.kind == "domain_exit"; });
  }
  const Vector& final_state() const { return states.back(); }

  /// Dense-output state at any t between start_time() and end_time().
  Vector state_at(double t) const {
    const double s = direction * t;
    const double s0 = direction * times.front(), s1 = direction * times.back();
    if (s <= s0) return states.front();
    if (s >= s1) return states.back();
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(times.begin(), times.end(), t,
                         [this](double a, double b) { return direction * a < direction * b; }) -
        times.begin());
    const std::size_t lo = hi - 1;
    const double h = std::abs(times[hi] - times[lo]);
    const double th = std::abs(t - times[lo]) / h;
    const double th1 = 1.0 - th;
    const Vector& y0 = states[lo];
    const Vector ydiff = states[hi] - y0;
    const Vector bspl = h * derivs_[lo] - ydiff;
    const Vector r4 = ydiff - h * derivs_[hi] - bspl;
    return y0 + th * (ydiff + th1 * (bspl + th * (r4 + th1 * dense_[lo])));
  }

  /// States on t0, t0 + dt, ... up to t1 (inclusive within roundoff).
  std::vector<Vector> sample(double t0, double t1, double dt) const {
    std::vector<Vector> out;
    const auto count = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9));
    out.reserve(count + 1);
    for (std::size_t j = 0; j <= count; ++j) out.push_back(state_at(t0 + static_cast<double>(j) * dt));
    return out;
  }

 private:
  friend Trajectory integrate_impl(const VectorField&, const Vector&, double, int,
                                   const IntegratorOptions&);
  std::vector<Vector> derivs_;  // integrated-field derivative at each state
  std::vector<Vector> dense_;   // fifth dense-output coefficient per step
};

namespace dopri {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                        d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                        d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;
}  // namespace dopri

inline Trajectory integrate_impl(const VectorField& field, const Vector& x0, double T, int direction,
                                 const IntegratorOptions& opt) {
  using namespace dopri;
  require_dim(x0, field.dim, "integrate");
  if (!(T > 0.0) || !std::isfinite(T)) throw Error(Errc::InvalidParameter, "integrate: T must be > 0");
  if (!(opt.rtol > 0.0) || !(opt.atol > 0.0)) {
    throw Error(Errc::InvalidParameter, "integrate: rtol and atol must be > 0");
  }
  if (!all_finite(x0)) throw Error(Errc::NonFiniteState, "integrate: initial state not finite");
  const double slack = 1e-12 * std::max(1.0, field.domain.diameter());
  if (!field.domain.contains(x0, slack)) {
    throw Error(Errc::DomainViolation, "integrate: initial state outside the domain");
  }

  const double sign = direction > 0 ? 1.0 : -1.0;
  auto f = [&](const Vector& y) -> Vector {
    Vector d = field.eval(y);
    if (direction < 0) d = -d;
    return d;
  };
  const Eigen::Index n = x0.size();
  auto err_scale = [&](const Vector& a, const Vector& b) {
    return (opt.atol + opt.rtol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
  };

  Trajectory tr;
  tr.accepted_tol = opt.rtol;
  tr.requested_duration = T;
  tr.direction = direction;

  Vector y = x0;
  Vector k1 = f(y);
  if (!all_finite(k1)) throw Error(Errc::NonFiniteState, "integrate: field not finite at x0");
  double s = 0.0;
  tr.times.push_back(0.0);
  tr.states.push_back(y);
  tr.derivs_.push_back(k1);

  const double hmax = std::min(opt.max_step, T);
  double h = opt.initial_step;
  if (!(h > 0.0)) {
    // Hairer-Norsett-Wanner starting step
    const Vector sc = err_scale(y, y);
    const double dnorm0 = std::sqrt((y.array() / sc.array()).square().mean());
    const double dnorm1 = std::sqrt((k1.array() / sc.array()).square().mean());
    double h0 = (dnorm0 < 1e-5 || dnorm1 < 1e-5) ? 1e-6 : 0.01 * dnorm0 / dnorm1;
    h0 = std::min(h0, hmax);
    const Vector y1 = y + h0 * k1;
    const Vector k2 = f(y1);
    const double d2 = std::sqrt(((k2 - k1).array() / sc.array()).square().mean()) / h0;
    const double dm = std::max(dnorm1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, hmax});
  }

  const double hmin = 1e-12 * T;
  bool last_rejected = false;
  std::size_t steps = 0;
  Vector k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), ynew(n), err(n);

  while (s < T) {
    if (++steps > opt.max_steps) throw Error(Errc::IntegrationFailure, "integrate: step budget exhausted");
    bool final_step = false;
    if (s + h >= T * (1.0 - 1e-15) || s + 1.01 * h >= T) {
      h = T - s;
      final_step = true;
    }
    if (h < hmin && !final_step) {
      throw Error(Errc::StepUnderflow, "integrate: step size underflow at t=" + std::to_string(sign * s));
    }

    yt = y + h * a21 * k1;
    k2 = f(yt);
    yt = y + h * (a31 * k1 + a32 * k2);
    k3 = f(yt);
    yt = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    k4 = f(yt);
    yt = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    k5 = f(yt);
    yt = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    k6 = f(yt);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    k7 = f(ynew);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double enorm;
    if (!all_finite(ynew) || !all_finite(k7)) {
      enorm = std::numeric_limits<double>::infinity();
    } else {
      const Vector sc = err_scale(y, ynew);
      enorm = std::sqrt((err.array() / sc.array()).square().mean());
    }

    if (enorm <= 1.0) {
      bool crossed = false;
      for (const Kink& kk : field.kinks) {
        const double a = y(kk.coord) - kk.value, b = ynew(kk.coord) - kk.value;
        if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) crossed = true;
      }
      if (crossed && h > opt.kink_step) {
        h = std::max(0.5 * h, opt.kink_step);
        last_rejected = true;
        continue;
      }

      const Vector r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      s = final_step ? T : s + h;
      if (!field.domain.contains(ynew, slack)) {
        tr.events.push_back({sign * s, "domain_exit"});
        return tr;
      }
      tr.dense_.push_back(r5);
      tr.times.push_back(sign * s);
      tr.states.push_back(ynew);
      tr.derivs_.push_back(k7);
      y = ynew;
      k1 = k7;
      if (final_step) break;

      double fac = enorm == 0.0 ? 5.0 : 0.9 * std::pow(enorm, -0.2);
      fac = std::clamp(fac, 0.2, 5.0);
      if (last_rejected) fac = std::min(fac, 1.0);
      h = std::min(h * fac, hmax);
      last_rejected = false;
    } else {
      if (!std::isfinite(enorm) && h <= hmin) {
        throw Error(Errc::NonFiniteState, "integrate: non-finite state at t=" + std::to_string(sign * s));
      }
      const double fac = std::isfinite(enorm) ? std::max(0.2, 0.9 * std::pow(enorm, -0.2)) : 0.2;
      h *= fac;
      last_rejected = true;
      if (h < hmin) {
        throw Error(std::isfinite(enorm) ? Errc::StepUnderflow : Errc::NonFiniteState,
                    "integrate: step size underflow at t=" + std::to_string(sign * s));
      }
    }
  }
  return tr;
}

/// Forward orbit x(t), 0 <= t <= T. Leaving the domain ends the run with a
/// "domain_exit" event; the returned trajectory holds the in-domain part.
inline Trajectory integrate(const VectorField& field, const Vector& x0, double T,
                            const IntegratorOptions& opt = {}) {
  return integrate_impl(field, x0, T, +1, opt);
}

/// Backward orbit x(t), -T <= t <= 0, obtained by integrating -F.
inline Trajectory integrate_backward(const VectorField& field, const Vector& x0, double T,
                                     const IntegratorOptions& opt = {}) {
  return integrate_impl(field, x0, T, -1, opt);
}

/// Phi_t(x) for t of either sign; throws DomainExit if the orbit leaves.
inline Vector flow(const VectorField& field, const Vector& x0, double t,
                   const IntegratorOptions& opt = {}) {
  if (t == 0.0) return x0;
  Trajectory tr = t > 0 ? integrate(field, x0, t, opt) : integrate_backward(field, x0, -t, opt);
  if (tr.exited_domain()) throw Error(Errc::DomainExit, "flow: orbit left the domain");
  return tr.final_state();
}

}  // namespace kcone
