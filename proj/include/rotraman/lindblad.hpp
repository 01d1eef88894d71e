#pragma once

#include <array>
#include <vector>

#include "rotraman/common.hpp"
#include "rotraman/coupling.hpp"
#include "rotraman/observables.hpp"

namespace rotraman {

// Operators for dsigma/dtau = -i[H_M + H_R, sigma] + sum_i D[S_i] sigma, all
// assembled at t = 0. For a stationary drive (single component, or all
// detunings equal) these are valid for all t; otherwise the time-dependent
// pieces are rebuilt from the coupling set on the fly.
struct LindbladOps {
  RotBasis basis;
  CouplingSet cpl;
  FieldConfig field;
  bool stationary = false;

  // Stationary-case cached operators.
  Mat H;              // H_M + H_R
  std::array<Mat, 3> S;
  Mat Q;              // sum_i S_i^dag S_i
  Mat K;              // -i*H - Q/2, the "drift" half of the Liouvillian
  Mat H_eff;          // H - (i/2) Q

  // Sparse mirrors for the superoperator apply: H_R couples only j -> j, j+-2
  // with |dm| <= 2, so these stay ~1% dense at j_max = 12 and dominate the
  // Krylov matvec cost.
  SpMat K_sp, Kadj_sp;
  std::array<SpMat, 3> S_sp, Sadj_sp;
  SpMat Q_sp;
};

LindbladOps build_lindblad(const RotBasis& basis, const FieldConfig& field);

// Right-hand side at time t, writing into `out`. For stationary ops t is
// ignored. out = K*sigma + sigma*K^dag + sum_i S_i sigma S_i^dag.
void lindblad_rhs(const LindbladOps& ops, double t, const Mat& sigma,
                  Mat& out);

struct PropagateOptions {
  double t_max = 20.0;
  int n_points = 2000;         // output grid size, t_k = t_max*k/(n_points-1)
  double rel_tol = 1e-9;       // ODE path only
  double leakage_threshold = 1e-6;
  double trace_tol = 1e-6;
  int sigma_stride = 0;        // keep every k-th density matrix (0 = none)
  int krylov_m = 32;
  bool force_ode = false;      // diagnostic: use the ODE path even if
                               // the drive is stationary
};

struct LindbladRun {
  ObservableSeries series;
  std::vector<double> sigma_times;
  std::vector<Mat> sigmas;       // per sigma_stride, always includes final
  double min_eig = 0.0;          // most negative eigenvalue seen (strided)
  double max_herm_resid = 0.0;   // max ||sigma - sigma^dag||_max seen
  double expected_jumps = 0.0;   // integral of Tr(Q sigma) dt (trapezoid)
  long rhs_evals = 0;
};

// Propagates sigma0 across [0, t_max] and samples observables on the uniform
// output grid. Throws NumericalAbort if trace drift or leakage exceeds the
// configured thresholds.
LindbladRun propagate(const LindbladOps& ops, const Mat& sigma0,
                      const PropagateOptions& opt);

}  // namespace rotraman
