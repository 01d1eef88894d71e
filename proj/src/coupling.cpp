#include "rotraman/coupling.hpp"

#include <cmath>
#include <stdexcept>

namespace rotraman {

bool FieldConfig::stationary() const {
  if (components.size() <= 1) return true;
  const double d0 = components.front().delta;
  for (const auto& c : components)
    if (c.delta != d0) return false;
  return true;
}

Mat direction_cosine(const RotBasis& ground, const RotBasis& excited, int q) {
  if (q < -1 || q > 1) throw std::domain_error("direction_cosine: q must be -1, 0, or +1");
  if (ground.manifold != Manifold::ground || excited.manifold != Manifold::excited)
    throw std::invalid_argument("direction_cosine: manifold tags mismatched");
  if (excited.j_max < ground.j_max)
    throw std::invalid_argument("direction_cosine: excited basis lacks the truncation buffer");

  Mat out = Mat::Zero(excited.size(), ground.size());
  for (int j = 0; j <= ground.j_max; ++j) {
    for (int je : {j - 1, j + 1}) {
      if (je < 0 || je > excited.j_max) continue;
      const double radial =
          cg(j, 0, 1, 0, je, 0) * std::sqrt((2.0 * j + 1.0) / (2.0 * je + 1.0));
      for (int m = -j; m <= j; ++m) {
        const int me = m + q;
        if (me < -je || me > je) continue;
        const double val = cg(j, m, 1, q, je, me) * radial;
        if (val != 0.0)
          out(excited.index(je, me), ground.index(j, m)) = val;
      }
    }
  }
  return out;
}

CouplingSet build_coupling(const RotBasis& ground) {
  if (ground.manifold != Manifold::ground)
    throw std::invalid_argument("build_coupling: ground basis required");
  CouplingSet cs;
  cs.ground = ground;
  cs.excited = build_basis(ground.j_max + 1, Manifold::excited);
  for (int q = -1; q <= 1; ++q)
    cs.D[q + 1] = direction_cosine(ground, cs.excited, q);

  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  cs.Nx = (cs.D[0] - cs.D[2]).adjoint() * inv_sqrt2;
  cs.Ny = iu * (cs.D[2] + cs.D[0]).adjoint() * inv_sqrt2;
  cs.Nz = cs.D[1].adjoint();

  cs.h_rot = Mat::Zero(ground.size(), ground.size());
  for (int idx = 0; idx < ground.size(); ++idx) {
    const auto [j, m] = ground.jm(idx);
    (void)m;
    cs.h_rot(idx, idx) = static_cast<double>(j * (j + 1));
  }
  return cs;
}

Mat field_projection(const CouplingSet& cpl, const FieldConfig& field,
                     double t) {
  Mat A = Mat::Zero(cpl.excited.size(), cpl.ground.size());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (const auto& comp : field.components) {
    const cdouble ex = comp.polarization(0);
    const cdouble ey = comp.polarization(1);
    const cdouble ez = comp.polarization(2);
    // n.E in spherical components: sum_q (-1)^q n_q eps_{-q}, with
    // eps_{+1} = -(ex + i ey)/sqrt2, eps_0 = ez, eps_{-1} = (ex - i ey)/sqrt2
    const cdouble c_p1 = -(ex - iu * ey) * inv_sqrt2;  // coefficient of D_{+1}
    const cdouble c_0 = ez;
    const cdouble c_m1 = (ex + iu * ey) * inv_sqrt2;   // coefficient of D_{-1}
    const cdouble phase =
        comp.amplitude * std::exp(-iu * (comp.delta * t));
    A += phase * (c_m1 * cpl.D[0] + c_0 * cpl.D[1] + c_p1 * cpl.D[2]);
  }
  return A;
}

Mat build_H_R(const CouplingSet& cpl, const FieldConfig& field, double t) {
  const Mat A = field_projection(cpl, field, t);
  const double sign = field.detuning_sign >= 0 ? 1.0 : -1.0;
  Mat H = (-sign * field.omega_R) * (A.adjoint() * A);
  // symmetrize away the last-bit asymmetry from the matrix product
  H = 0.5 * (H + H.adjoint()).eval();
  return H;
}

std::array<Mat, 3> build_jumps(const CouplingSet& cpl,
                               const FieldConfig& field, double t) {
  const Mat A = field_projection(cpl, field, t);
  const double g = std::sqrt(field.gamma_over_delta * field.omega_R);
  return {g * (cpl.Nx * A), g * (cpl.Ny * A), g * (cpl.Nz * A)};
}

Mat build_H_eff(const CouplingSet& cpl, const FieldConfig& field, double t) {
  const double sign = field.detuning_sign >= 0 ? 1.0 : -1.0;
  const cdouble pref = 1.0 + iu * (sign * field.gamma_over_delta / 2.0);
  return cpl.h_rot + pref * build_H_R(cpl, field, t);
}

Eigen::VectorXd interior_mask(const RotBasis& basis) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(basis.size());
  for (int idx = 0; idx < basis.size(); ++idx)
    if (basis.jm(idx).first <= basis.j_max - 2) mask[idx] = 1.0;
  return mask;
}

}  // namespace rotraman
