#pragma once

// Internal adaptive Dormand-Prince 5(4) stepper shared by the density-matrix
// ODE path and the time-dependent trajectory engine. Not installed.

#include <algorithm>
#include <cmath>
#include <functional>

#include "rotraman/common.hpp"

namespace rotraman::detail {

using OdeRhs = std::function<void(double, const Vec&, Vec&)>;

// Called after every accepted internal step; return false to pause the
// integration at that point (advance then returns false with t, y updated).
using OdeWatch = std::function<bool(double, const Vec&)>;

class Dp5 {
 public:
  Dp5(OdeRhs rhs, double rel_tol, double abs_tol)
      : rhs_(std::move(rhs)), rel_tol_(rel_tol), abs_tol_(abs_tol) {}

  long evals() const { return evals_; }
  void reset_step() { h_ = 0.0; }

  // Advances (t, y) to t_target exactly. Returns false if the watch paused
  // the integration before reaching it.
  bool advance(double& t, Vec& y, double t_target,
               const OdeWatch& watch = nullptr) {
    if (t_target <= t) return true;
    const auto n = y.size();
    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y5(n), err(n);
    if (h_ <= 0.0) h_ = initial_step(t, y, t_target - t);
    while (t < t_target) {
      double h = std::min(h_, t_target - t);
      bool accepted = false;
      for (int tries = 0; tries < 200 && !accepted; ++tries) {
        rhs_(t, y, k1);
        rhs_(t + 0.2 * h, y + h * (0.2 * k1), k2);
        rhs_(t + 0.3 * h, y + h * (3.0 / 40 * k1 + 9.0 / 40 * k2), k3);
        rhs_(t + 0.8 * h,
             y + h * (44.0 / 45 * k1 - 56.0 / 15 * k2 + 32.0 / 9 * k3), k4);
        rhs_(t + 8.0 / 9 * h,
             y + h * (19372.0 / 6561 * k1 - 25360.0 / 2187 * k2 +
                      64448.0 / 6561 * k3 - 212.0 / 729 * k4),
             k5);
        rhs_(t + h,
             y + h * (9017.0 / 3168 * k1 - 355.0 / 33 * k2 +
                      46732.0 / 5247 * k3 + 49.0 / 176 * k4 -
                      5103.0 / 18656 * k5),
             k6);
        y5 = y + h * (35.0 / 384 * k1 + 500.0 / 1113 * k3 + 125.0 / 192 * k4 -
                      2187.0 / 6784 * k5 + 11.0 / 84 * k6);
        rhs_(t + h, y5, k7);
        evals_ += 7;
        err = h * (71.0 / 57600 * k1 - 71.0 / 16695 * k3 + 71.0 / 1920 * k4 -
                   17253.0 / 339200 * k5 + 22.0 / 525 * k6 - 1.0 / 40 * k7);
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double sc =
              abs_tol_ + rel_tol_ * std::max(std::abs(y[i]), std::abs(y5[i]));
          const double q = std::abs(err[i]) / sc;
          sum += q * q;
        }
        const double enorm = std::sqrt(sum / static_cast<double>(n));
        if (enorm <= 1.0 || h <= 1e-14 * std::max(1.0, std::abs(t))) {
          t += h;
          y.swap(y5);
          const double fac =
              enorm > 0 ? 0.9 * std::pow(enorm, -0.2) : 5.0;
          h_ = h * std::clamp(fac, 0.2, 5.0);
          accepted = true;
        } else {
          h *= std::clamp(0.9 * std::pow(enorm, -0.2), 0.1, 0.9);
        }
      }
      if (!accepted)
        throw NumericalAbort("ode: step size collapsed at t = " +
                             std::to_string(t));
      if (watch && !watch(t, y)) return false;
    }
    return true;
  }

 private:
  double initial_step(double t, const Vec& y, double span) {
    Vec f(y.size());
    rhs_(t, y, f);
    ++evals_;
    const double dy = f.norm();
    const double yy = std::max(y.norm(), 1e-8);
    double h = dy > 0 ? 0.01 * yy / dy : span / 100.0;
    return std::min(h, span);
  }

  OdeRhs rhs_;
  double rel_tol_, abs_tol_;
  double h_ = 0.0;
  long evals_ = 0;
};

}  // namespace rotraman::detail
