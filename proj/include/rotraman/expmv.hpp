#pragma once

#include <functional>
#include <vector>

#include "rotraman/common.hpp"

namespace rotraman {

// Krylov action of the matrix exponential: y = exp(t*A)*v for a linear map A
// given only through matvecs. Arnoldi with restarts and an a-posteriori
// generalized-residual error estimate, in the style of Expokit's zgexpv.
//
// `dense_out(theta, w)` is invoked for requested intermediate fractions
// theta in (0, 1] of the current substep, with w = exp(theta*h*A)*v_sub.
// The fractions are supplied per substep via `grid`, so callers can collect
// exp(t_k*A)*v on a whole output grid from a single Arnoldi sweep per step.

struct ExpmvOptions {
  int m = 32;             // Krylov subspace dimension
  double tol = 1e-10;     // relative tolerance per substep
  double h_init = 0.1;    // initial substep guess
  int max_steps = 200000; // safety cap on substeps
};

struct ExpmvStats {
  long matvecs = 0;
  long steps = 0;
  long rejections = 0;
};

using ApplyFn = std::function<void(const Vec&, Vec&)>;

// Advances v across [0, t], calling `emit(t_abs, w)` at every grid time in
// `grid` (ascending, within [0, t]). On return v holds exp(t*A)*v0.
ExpmvStats expmv_grid(const ApplyFn& apply, double t, Vec& v,
                      const std::vector<double>& grid,
                      const std::function<void(double, const Vec&)>& emit,
                      const ExpmvOptions& opt = {});

}  // namespace rotraman
