#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rotraman/coupling.hpp"

using namespace rotraman;

namespace {

FieldConfig x_polarized(double omega_R, double gd, int sign = +1) {
  FieldConfig f;
  f.omega_R = omega_R;
  f.gamma_over_delta = gd;
  f.detuning_sign = sign;
  f.components = {FieldComponent{1.0, {1.0, 0.0, 0.0}, 0.0}};
  return f;
}

Eigen::Vector3cd random_polarization(std::mt19937& gen) {
  std::normal_distribution<double> g;
  Eigen::Vector3cd e;
  for (int i = 0; i < 3; ++i) e(i) = cdouble(g(gen), g(gen));
  return e / e.norm();
}

}  // namespace

TEST_CASE("direction cosines match the Gaunt quadrature, all entries") {
  const auto ground = build_basis(2, Manifold::ground);
  const auto excited = build_basis(3, Manifold::excited);
  for (int q = -1; q <= 1; ++q) {
    const Mat D = direction_cosine(ground, excited, q);
    for (int col = 0; col < ground.size(); ++col) {
      const auto [j, m] = ground.jm(col);
      for (int row = 0; row < excited.size(); ++row) {
        const auto [je, me] = excited.jm(row);
        const double ref = oracles::direction_cosine_quadrature(je, me, j, m, q);
        CAPTURE(je);
        CAPTURE(me);
        CAPTURE(j);
        CAPTURE(m);
        CAPTURE(q);
        CHECK(std::abs(D(row, col) - ref) < 1e-12);
      }
    }
  }
}

TEST_CASE("direction cosines match the quadrature on random entries at j_max = 6") {
  const auto ground = build_basis(6, Manifold::ground);
  const auto excited = build_basis(7, Manifold::excited);
  std::mt19937 gen(77);
  std::uniform_int_distribution<int> pick_j(0, 6), pick_q(-1, 1);
  int checked = 0;
  while (checked < 30) {
    const int j = pick_j(gen);
    const int q = pick_q(gen);
    const int je = (gen() & 1) ? j + 1 : j - 1;
    if (je < 0) continue;
    std::uniform_int_distribution<int> pick_m(-j, j);
    const int m = pick_m(gen);
    const int me = m + q;
    if (me < -je || me > je) continue;
    const Mat D = direction_cosine(ground, excited, q);
    const double ref = oracles::direction_cosine_quadrature(je, me, j, m, q);
    CHECK(std::abs(D(excited.index(je, me), ground.index(j, m)) - ref) < 1e-12);
    ++checked;
  }
}

TEST_CASE("direction cosine selection rules and pinned element") {
  const auto ground = build_basis(4, Manifold::ground);
  const auto excited = build_basis(5, Manifold::excited);
  for (int q = -1; q <= 1; ++q) {
    const Mat D = direction_cosine(ground, excited, q);
    for (int col = 0; col < ground.size(); ++col) {
      const auto [j, m] = ground.jm(col);
      for (int row = 0; row < excited.size(); ++row) {
        const auto [je, me] = excited.jm(row);
        if (std::abs(je - j) != 1 || me != m + q)
          CHECK(D(row, col) == cdouble(0.0, 0.0));
      }
    }
  }
  // <1 0|n_0|0 0> = 1/sqrt(3)
  const Mat D0 = direction_cosine(ground, excited, 0);
  CHECK(std::abs(D0(excited.index(1, 0), ground.index(0, 0)).real() -
                 1.0 / std::sqrt(3.0)) < 1e-15);
}

TEST_CASE("direction cosine argument validation") {
  const auto ground = build_basis(3, Manifold::ground);
  const auto excited = build_basis(4, Manifold::excited);
  CHECK_THROWS_AS(direction_cosine(ground, excited, 2), std::domain_error);
  CHECK_THROWS_AS(direction_cosine(ground, ground, 0), std::invalid_argument);
  const auto small = build_basis(2, Manifold::excited);
  CHECK_THROWS_AS(direction_cosine(ground, small, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_coupling(excited), std::invalid_argument);
}

TEST_CASE("Cartesian direction cosines are the documented D_q combinations") {
  const auto cpl = build_coupling(build_basis(5));
  const double s2 = std::sqrt(2.0);
  CHECK(((cpl.D[0] - cpl.D[2]).adjoint() / s2 - cpl.Nx).cwiseAbs().maxCoeff() <
        1e-15);
  CHECK((iu * (cpl.D[2] + cpl.D[0]).adjoint() / s2 - cpl.Ny)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK((cpl.D[1].adjoint() - cpl.Nz).cwiseAbs().maxCoeff() == 0.0);

  // h_rot is diag j(j+1)
  for (int idx = 0; idx < cpl.ground.size(); ++idx) {
    const auto [j, m] = cpl.ground.jm(idx);
    (void)m;
    CHECK(cpl.h_rot(idx, idx) == cdouble(j * (j + 1), 0.0));
  }
  CHECK(cpl.excited.j_max == cpl.ground.j_max + 1);
}

TEST_CASE("direction-cosine completeness on interior excited states") {
  // sum_{i,g} |<g|N_i|e>|^2 = <e|n.n|e> = 1 whenever both j_e +- 1 ladders
  // fit inside the ground truncation, i.e. j_e <= j_max - 1.
  const auto cpl = build_coupling(build_basis(6));
  Mat M = cpl.Nx.adjoint() * cpl.Nx;
  M += cpl.Ny.adjoint() * cpl.Ny;
  M += cpl.Nz.adjoint() * cpl.Nz;
  for (int e = 0; e < cpl.excited.size(); ++e) {
    const auto [je, me] = cpl.excited.jm(e);
    (void)me;
    if (je <= cpl.ground.j_max - 1) {
      CHECK(std::abs(M(e, e).real() - 1.0) < 1e-14);
    } else {
      CHECK(M(e, e).real() < 1.0 - 1e-3);  // truncation deficit is real
    }
  }
  // and the Cartesian sum equals the spherical one
  Mat Msph = Mat::Zero(cpl.excited.size(), cpl.excited.size());
  for (int qi = 0; qi < 3; ++qi) Msph += cpl.D[qi] * cpl.D[qi].adjoint();
  CHECK((M - Msph).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("field projection picks the advertised polarization combinations") {
  const auto cpl = build_coupling(build_basis(4));
  const double s2 = std::sqrt(2.0);

  FieldConfig f = x_polarized(0.1, 0.01);
  SUBCASE("x polarization gives (D_m1 - D_p1)/sqrt2 = Nx^dag") {
    const Mat A = field_projection(cpl, f, 0.0);
    CHECK((A - (cpl.D[0] - cpl.D[2]) / s2).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((A - cpl.Nx.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("z polarization gives D_0") {
    f.components[0].polarization = {0.0, 0.0, 1.0};
    const Mat A = field_projection(cpl, f, 0.0);
    CHECK((A - cpl.D[1]).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("sigma+ polarization drives only dm = +1") {
    f.components[0].polarization = {-1.0 / s2, cdouble(0.0, -1.0) / s2, 0.0};
    const Mat A = field_projection(cpl, f, 0.0);
    CHECK((A - cpl.D[2]).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("amplitude scales linearly, detuning rotates the phase") {
    f.components[0].amplitude = cdouble(2.0, 1.0);
    f.components[0].delta = 0.7;
    const Mat A0 = field_projection(cpl, f, 0.0);
    const Mat At = field_projection(cpl, f, 1.3);
    CHECK((A0 - cdouble(2.0, 1.0) * (cpl.D[0] - cpl.D[2]) / s2)
              .cwiseAbs()
              .maxCoeff() < 1e-14);
    const cdouble rot = std::exp(-iu * (0.7 * 1.3));
    CHECK((At - rot * A0).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("H_R is Hermitian and its sign follows the detuning") {
  const auto cpl = build_coupling(build_basis(6));
  std::mt19937 gen(4242);
  for (int rep = 0; rep < 4; ++rep) {
    FieldConfig f = x_polarized(0.3, 0.05, rep % 2 == 0 ? +1 : -1);
    f.components[0].polarization = random_polarization(gen);
    const Mat H_R = build_H_R(cpl, f, 0.0);
    CHECK((H_R - H_R.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
    Eigen::SelfAdjointEigenSolver<Mat> es(H_R, Eigen::EigenvaluesOnly);
    if (f.detuning_sign > 0)
      CHECK(es.eigenvalues().maxCoeff() < 1e-14);  // negative semidefinite
    else
      CHECK(es.eigenvalues().minCoeff() > -1e-14);
    // scale: H_R = -sign * omega_R * A^dag A
    const Mat A = field_projection(cpl, f, 0.0);
    const double sgn = f.detuning_sign > 0 ? 1.0 : -1.0;
    CHECK((H_R + sgn * f.omega_R * (A.adjoint() * A)).cwiseAbs().maxCoeff() <
          1e-14);
  }
}

TEST_CASE("jump operators obey the interior sum rule") {
  std::mt19937 gen(99);
  std::uniform_real_distribution<double> uom(0.05, 1.0), ugd(0.01, 0.5);
  for (int j_max : {4, 6}) {
    const auto basis = build_basis(j_max);
    const auto cpl = build_coupling(basis);
    const Eigen::VectorXd mask = interior_mask(basis);
    for (int rep = 0; rep < 5; ++rep) {
      FieldConfig f;
      f.omega_R = uom(gen);
      f.gamma_over_delta = ugd(gen);
      f.components = {FieldComponent{1.0, random_polarization(gen), 0.0}};
      if (rep == 4) {  // two-color drive, checked off t = 0
        f.components.push_back(
            FieldComponent{cdouble(0.4, -0.2), random_polarization(gen), 2.5});
      }
      const double t = rep == 4 ? 0.9 : 0.0;
      const auto S = build_jumps(cpl, f, t);
      const Mat A = field_projection(cpl, f, t);
      Mat lhs = Mat::Zero(basis.size(), basis.size());
      for (const auto& s : S) lhs += s.adjoint() * s;
      const Mat rhs = f.gamma_over_delta * f.omega_R * (A.adjoint() * A);
      const Mat diff = lhs - rhs;

      double max_interior = 0.0, max_edge = 0.0;
      for (int r = 0; r < basis.size(); ++r)
        for (int c = 0; c < basis.size(); ++c) {
          const double d = std::abs(diff(r, c));
          if (mask[r] > 0.0 && mask[c] > 0.0)
            max_interior = std::max(max_interior, d);
          else
            max_edge = std::max(max_edge, d);
        }
      CHECK(max_interior < 1e-14);
      // outside the interior the truncated ladder is genuinely incomplete
      CHECK(max_edge > 1e-6 * f.gamma_over_delta * f.omega_R);
    }
  }
}

TEST_CASE("jump operators vanish with the dissipation switched off") {
  const auto cpl = build_coupling(build_basis(4));
  const auto S = build_jumps(cpl, x_polarized(0.1, 0.0), 0.0);
  for (const auto& s : S) CHECK(s.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("effective Hamiltonian equals the closed shifted form") {
  const auto cpl = build_coupling(build_basis(5));
  for (int sign : {+1, -1}) {
    const FieldConfig f = x_polarized(0.2, 0.04, sign);
    const Mat He = build_H_eff(cpl, f, 0.0);
    const Mat H_R = build_H_R(cpl, f, 0.0);
    const cdouble pref =
        1.0 + iu * (double(sign) * f.gamma_over_delta / 2.0);
    CHECK((He - (cpl.h_rot + pref * H_R)).cwiseAbs().maxCoeff() < 1e-15);

    // On the interior it agrees with H - (i/2) sum_i S_i^dag S_i; at the
    // truncation edge the jump-sum form loses the incomplete ladders.
    const auto S = build_jumps(cpl, f, 0.0);
    Mat Q = Mat::Zero(He.rows(), He.cols());
    for (const auto& s : S) Q += s.adjoint() * s;
    const Mat He_jump = cpl.h_rot + H_R - 0.5 * iu * Q;
    const Eigen::VectorXd mask = interior_mask(cpl.ground);
    const Mat diff = He - He_jump;
    for (int r = 0; r < He.rows(); ++r)
      for (int c = 0; c < He.cols(); ++c)
        if (mask[r] > 0.0 && mask[c] > 0.0)
          CHECK(std::abs(diff(r, c)) < 1e-15);
  }
}

TEST_CASE("stationarity detection") {
  FieldConfig f = x_polarized(0.1, 0.01);
  CHECK(f.stationary());
  f.components.push_back(FieldComponent{0.5, {0.0, 0.0, 1.0}, 0.0});
  CHECK(f.stationary());  // equal deltas share one global phase
  f.components[1].delta = 1.5;
  CHECK(!f.stationary());
}

TEST_CASE("interior mask marks j <= j_max - 2") {
  const auto basis = build_basis(7);
  const auto mask = interior_mask(basis);
  for (int idx = 0; idx < basis.size(); ++idx) {
    const auto [j, m] = basis.jm(idx);
    (void)m;
    CHECK(mask[idx] == (j <= 5 ? 1.0 : 0.0));
  }
}
