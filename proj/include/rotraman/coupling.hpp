#pragma once

#include <array>
#include <vector>

#include "rotraman/angmom.hpp"
#include "rotraman/common.hpp"

namespace rotraman {

// One spectral component of the positive-frequency driving field: a relative
// complex amplitude, a (unit-norm) complex polarization vector in Cartesian
// components, and a detuning offset delta from the common carrier, in units
// of the rotational constant B.
struct FieldComponent {
  cdouble amplitude{1.0, 0.0};
  Eigen::Vector3cd polarization{1.0, 0.0, 0.0};
  double delta = 0.0;
};

// Off-resonant driving field. omega_R is the two-photon Rabi frequency over
// B and sets the overall scale of H_R; gamma_over_delta = |Gamma/Delta| >= 0
// controls the dissipative channels. detuning_sign = +1 keeps H_R negative
// semidefinite (default); -1 flips the sign of the coherent shift only.
struct FieldConfig {
  double omega_R = 0.0;
  double gamma_over_delta = 0.0;
  int detuning_sign = +1;
  std::vector<FieldComponent> components{FieldComponent{}};

  // True when the generator built from this field is time independent: a
  // single spectral component, or several sharing the same delta (the common
  // phase cancels in every bilinear).
  bool stationary() const;
};

// Direction-cosine blocks and derived operators between a ground rotational
// basis and its excited-manifold buffer (j_max^e = j_max + 1).
struct CouplingSet {
  RotBasis ground;
  RotBasis excited;
  std::array<Mat, 3> D;  // D[q+1] = P_e n_q P_g for q = -1, 0, +1
  Mat Nx, Ny, Nz;        // Cartesian direction cosines, excited -> ground
  Mat h_rot;             // H_M = diag j(j+1) on the ground basis
};

// <j_e m_e| n_q |j m> on the Sigma-Sigma ladder:
// cg(j,m,1,q,j_e,m_e) * cg(j,0,1,0,j_e,0) * sqrt((2j+1)/(2j_e+1)).
Mat direction_cosine(const RotBasis& ground, const RotBasis& excited, int q);

CouplingSet build_coupling(const RotBasis& ground);

// A(t): projection of the normalized d.E^(+)(t) onto the excited manifold,
// sum over components of a_k e^{-i delta_k t} times the polarization
// contraction with the D_q.
Mat field_projection(const CouplingSet& cpl, const FieldConfig& field,
                     double t);

// H_R(t) = -sign * omega_R * A'(t) A(t), ground-basis operator in units of B.
Mat build_H_R(const CouplingSet& cpl, const FieldConfig& field, double t);

// S_i(t) = sqrt(gamma_over_delta * omega_R) * N_i A(t) for i = x, y, z,
// ground -> ground, in units of sqrt(B).
std::array<Mat, 3> build_jumps(const CouplingSet& cpl,
                               const FieldConfig& field, double t);

// H_eff(t) = H_M + (1 + i * sign * gamma_over_delta / 2) * H_R(t).
Mat build_H_eff(const CouplingSet& cpl, const FieldConfig& field, double t);

// 1.0 on states with j <= j_max - 2, else 0. On this interior subspace the
// truncated sum rule sum_i S_i'S_i = gamma_over_delta * omega_R * A'A holds
// exactly.
Eigen::VectorXd interior_mask(const RotBasis& basis);

}  // namespace rotraman
