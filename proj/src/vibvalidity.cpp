#include "rotraman/vibvalidity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rotraman {

double fc_amplitude(int m, int n, double beta) {
  if (m < 0 || n < 0)
    throw std::domain_error("fc_amplitude: quantum numbers must be >= 0");
  // Column n = 0 explicitly, then raise n with
  //   A(m, n+1) = [sqrt(m) A(m-1, n) - beta A(m, n)] / sqrt(n+1).
  // The base column is computed multiplicatively to avoid overflowing m!.
  std::vector<double> col(m + 1), next(m + 1);
  col[0] = std::exp(-0.5 * beta * beta);
  for (int k = 1; k <= m; ++k)
    col[k] = col[k - 1] * beta / std::sqrt(static_cast<double>(k));
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k <= m; ++k) {
      const double lower = k > 0 ? std::sqrt(static_cast<double>(k)) * col[k - 1] : 0.0;
      next[k] = (lower - beta * col[k]) / std::sqrt(static_cast<double>(j + 1));
    }
    col.swap(next);
  }
  return col[m];
}

double fc_overlap(int m, int n, double beta) {
  const double a = fc_amplitude(m, n, beta);
  return a * a;
}

Eigen::MatrixXd fc_kernel(int nu_max, double beta) {
  if (nu_max < 0) throw std::domain_error("fc_kernel: nu_max must be >= 0");
  const int n = nu_max + 1;
  // F(nu_e, nu) over a taller excited ladder, then K = F^T F. The excited
  // cutoff grows with beta^2 (mean shift) plus a wide safety band so the
  // truncation deficit stays below the row-sum check downstream.
  const int ne = n + static_cast<int>(std::ceil(beta * beta)) +
                 10 * static_cast<int>(std::ceil(beta)) + 30;
  Eigen::MatrixXd F(ne, n);
  for (int col = 0; col < n; ++col)
    for (int row = 0; row < ne; ++row) F(row, col) = fc_overlap(row, col, beta);
  return F.transpose() * F;
}

double heating_rate_g(const VibRateModel& model) {
  return 0.5 * model.eta * model.eta * model.rate_prefactor;
}

VibMoments closed_form_moments(const VibRateModel& model, double t) {
  const double gt = heating_rate_g(model) * t;
  VibMoments mm;
  mm.mean = gt;
  mm.variance = gt * gt + gt * (1.0 + 0.75 * model.eta * model.eta);
  return mm;
}

namespace {

VibMoments moments_of(const Eigen::VectorXd& P) {
  double m1 = 0.0, m2 = 0.0;
  for (int k = 0; k < P.size(); ++k) {
    m1 += k * P[k];
    m2 += static_cast<double>(k) * k * P[k];
  }
  return {m1, m2 - m1 * m1};
}

// Kernel on a ladder big enough that rows 0..nu_needed close to 1 within
// 1e-8. Returns the kernel and the ladder size actually used.
std::pair<Eigen::MatrixXd, int> closed_kernel(double beta, int nu_needed) {
  int nu = nu_needed;
  for (int tries = 0; tries < 20; ++tries) {
    const Eigen::MatrixXd K = fc_kernel(nu, beta);
    bool ok = true;
    for (int c = 0; c <= nu_needed && ok; ++c)
      if (std::abs(K.col(c).sum() - 1.0) > 1e-8) ok = false;
    if (ok) return {K, nu};
    nu = std::min(static_cast<int>(nu * 1.5) + 5, 400);
  }
  throw NumericalAbort(
      "vibvalidity: kernel row sums failed to close; ladder cap reached");
}

}  // namespace

VibRateRun integrate_rate_eq(const VibRateModel& model,
                             const Eigen::VectorXd& P0, double t_max,
                             int n_points) {
  if (n_points < 2)
    throw std::invalid_argument("integrate_rate_eq: n_points must be >= 2");
  if (P0.size() < 1 || std::abs(P0.sum() - 1.0) > 1e-10 ||
      P0.minCoeff() < 0.0)
    throw std::invalid_argument(
        "integrate_rate_eq: P0 must be a probability distribution");

  const double beta = 0.5 * model.eta;
  // The populated window spreads as mean + several sigma; size the ladder
  // from the closed forms at t_max, then let the row-sum check extend it.
  const auto target = closed_form_moments(model, t_max);
  const int spread = static_cast<int>(
      std::ceil(target.mean + 8.0 * std::sqrt(std::max(target.variance, 1.0))));
  const int nu_needed =
      std::max({model.nu_max, static_cast<int>(P0.size()) - 1 + spread, 10});
  auto [K, nu_used] = closed_kernel(beta, nu_needed);
  const int n = nu_used + 1;

  Eigen::VectorXd P = Eigen::VectorXd::Zero(n);
  P.head(P0.size()) = P0;

  VibRateRun run;
  run.nu_max_used = nu_used;
  run.times.resize(n_points);
  run.populations.reserve(n_points);
  run.moments.reserve(n_points);

  const double rate = model.rate_prefactor;
  auto rhs = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return rate * (K * p - p);
  };

  Eigen::VectorXd k1, k2, k3, k4;
  const double grid_dt = t_max / (n_points - 1);
  // Substep so rate * dt stays small; RK4 error then ~ (rate*dt)^5.
  const int sub = std::max(1, static_cast<int>(std::ceil(rate * grid_dt / 0.05)));
  const double dt = grid_dt / sub;

  for (int k = 0; k < n_points; ++k) {
    run.times[k] = t_max * k / (n_points - 1);
    if (k > 0) {
      for (int s = 0; s < sub; ++s) {
        k1 = rhs(P);
        k2 = rhs(P + 0.5 * dt * k1);
        k3 = rhs(P + 0.5 * dt * k2);
        k4 = rhs(P + dt * k3);
        P += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      if (std::abs(P.sum() - 1.0) > 1e-10)
        throw NumericalAbort(
            "vibvalidity: population leaked past the ladder; raise nu_max");
    }
    run.populations.push_back(P);
    run.moments.push_back(moments_of(P));
  }
  return run;
}

ValidityReport max_valid_time(const VibRateModel& model, double c) {
  ValidityReport rep;
  rep.safety_c = c;
  const double pref = model.rate_prefactor;
  const double eta2 = model.eta * model.eta;
  rep.tau_margin =
      c * model.delta_over_B / (pref * model.omega_nu_over_B * eta2);

  // Exact crossing of omega_nu * (mean + stddev) = Delta, using the closed
  // forms. The left side is strictly increasing in t, so bracket by
  // doubling, then bisect.
  const double thresh = model.delta_over_B / model.omega_nu_over_B;
  auto excursion = [&](double t) {
    const auto mm = closed_form_moments(model, t);
    return mm.mean + std::sqrt(mm.variance);
  };
  double hi = rep.tau_margin > 0 ? rep.tau_margin : 1.0;
  while (excursion(hi) < thresh) hi *= 2.0;
  double lo = 0.0;
  for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (excursion(mid) < thresh ? lo : hi) = mid;
  }
  rep.tau_crossing = hi;
  rep.tau_valid = std::min(rep.tau_margin, rep.tau_crossing);
  return rep;
}

}  // namespace rotraman
