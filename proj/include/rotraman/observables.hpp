#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rotraman/angmom.hpp"
#include "rotraman/common.hpp"

namespace rotraman {

// One output-grid row. All quantities are dimensionless (hbar = B = 1).
struct ObservableRecord {
  double t = 0.0;
  double jx = 0.0, jy = 0.0, jz = 0.0;
  double var_jx = 0.0, var_jy = 0.0, var_jz = 0.0;
  double jsq = 0.0;
  double purity = 0.0;
  double trace = 0.0;
  double leakage = 0.0;  // population with j >= j_max - 2
};

// Standard errors for the trajectory backend (between-trajectory for linear
// observables, grouped jackknife for variances and purity). Empty for the
// direct integrator.
struct SeRecord {
  double jx = 0.0, jy = 0.0, jz = 0.0;
  double var_jx = 0.0, var_jy = 0.0, var_jz = 0.0;
  double jsq = 0.0;
  double purity = 0.0;
};

struct ObservableSeries {
  std::string backend;  // "lindblad" or "trajectories"
  std::vector<ObservableRecord> rows;
  std::vector<SeRecord> se;  // same length as rows when present
};

// Sparse forms of the J operators; J_x and J_y have two entries per row, so
// measurement costs O(dim) instead of O(dim^2) in the trajectory hot loop.
struct ObservableContext {
  RotBasis basis;
  SpMat jx, jy;
  SpMat jx2, jy2;
  Eigen::VectorXd jz_diag;    // m
  Eigen::VectorXd jsq_diag;   // j(j+1)
  Eigen::VectorXd leak_mask;  // 1 for j >= j_max - 2
};

ObservableContext make_observable_context(const RotBasis& basis);

// Record from a density matrix. Traces are reported raw (no normalization
// by Tr sigma), so trace drift and leakage stay visible in the numbers.
ObservableRecord measure(const Eigen::Ref<const Mat>& sigma,
                         const ObservableContext& ctx, double t);

// Record from a normalized pure state.
ObservableRecord measure(const Vec& psi, const ObservableContext& ctx,
                         double t);

// Raw per-trajectory scalars for ensemble accumulation:
// {<Jx>, <Jy>, <Jz>, <Jx^2>, <Jy^2>, <Jz^2>, <J^2>}.
std::array<double, 7> measure_traj(const Vec& psi,
                                   const ObservableContext& ctx);

}  // namespace rotraman
