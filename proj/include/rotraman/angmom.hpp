#pragma once

#include <utility>

#include "rotraman/common.hpp"

namespace rotraman {

enum class Manifold { ground, excited };

// Truncated |j,m> basis of a rigid rotor, j = 0..j_max, ordered
// lexicographically (j ascending, m ascending within j). Index is dense:
// index(j,m) = j^2 + (j + m).
struct RotBasis {
  int j_max = 0;
  Manifold manifold = Manifold::ground;

  int size() const { return (j_max + 1) * (j_max + 1); }

  int index(int j, int m) const;
  std::pair<int, int> jm(int idx) const;
  bool contains(int j, int m) const {
    return j >= 0 && j <= j_max && m >= -j && m <= j;
  }
};

RotBasis build_basis(int j_max, Manifold manifold = Manifold::ground);

struct AngularMomentumOps {
  Mat jx, jy, jz;
  Mat jsq;  // diagonal j(j+1)
};

// J_x, J_y, J_z, J^2 in the given basis (hbar = 1). Block diagonal in j.
AngularMomentumOps build_J(const RotBasis& basis);

// Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M> in the Condon-Shortley
// convention, integer angular momenta only. Exact rational arithmetic
// internally; the square root happens once at the end. Throws
// std::domain_error for |m| > j or negative j; returns 0 for selection-rule
// violations (M != m1+m2, triangle rule).
double cg(int j1, int m1, int j2, int m2, int J, int M);

// Normalized pure state over a RotBasis.
struct PureState {
  RotBasis basis;
  Vec amps;
};

// Coherent angular-momentum state within the j manifold, amplitudes
// binom(2j, j+m)^{1/2} cos^{j+m}(theta/2) sin^{j-m}(theta/2) e^{-i m phi},
// so that <J> = j (sin th cos ph, sin th sin ph, cos th). Throws
// std::domain_error when j > basis.j_max.
PureState coherent_state(const RotBasis& basis, int j, double theta,
                         double phi);

}  // namespace rotraman
