#include "rotraman/observables.hpp"

#include <vector>

namespace rotraman {

namespace {

// Trace of sigma * A for sparse A: sum_ij A_ij sigma_ji.
double trace_prod(const Eigen::Ref<const Mat>& sigma, const SpMat& A) {
  cdouble acc = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      acc += it.value() * sigma(it.col(), it.row());
  return acc.real();
}

double trace_diag(const Eigen::Ref<const Mat>& sigma,
                  const Eigen::VectorXd& d) {
  cdouble acc = 0.0;
  for (int i = 0; i < d.size(); ++i) acc += d[i] * sigma(i, i);
  return acc.real();
}

}  // namespace

ObservableContext make_observable_context(const RotBasis& basis) {
  ObservableContext ctx;
  ctx.basis = basis;
  const int n = basis.size();

  std::vector<Eigen::Triplet<cdouble>> tx, ty;
  ctx.jz_diag = Eigen::VectorXd::Zero(n);
  ctx.jsq_diag = Eigen::VectorXd::Zero(n);
  ctx.leak_mask = Eigen::VectorXd::Zero(n);
  for (int j = 0; j <= basis.j_max; ++j) {
    for (int m = -j; m <= j; ++m) {
      const int idx = basis.index(j, m);
      ctx.jz_diag[idx] = m;
      ctx.jsq_diag[idx] = j * (j + 1);
      if (j >= basis.j_max - 2) ctx.leak_mask[idx] = 1.0;
      if (m < j) {
        const double c = 0.5 * std::sqrt(static_cast<double>(j * (j + 1) - m * (m + 1)));
        const int up = basis.index(j, m + 1);
        tx.emplace_back(up, idx, cdouble(c, 0.0));
        tx.emplace_back(idx, up, cdouble(c, 0.0));
        ty.emplace_back(up, idx, cdouble(0.0, -c));
        ty.emplace_back(idx, up, cdouble(0.0, +c));
      }
    }
  }
  ctx.jx.resize(n, n);
  ctx.jy.resize(n, n);
  ctx.jx.setFromTriplets(tx.begin(), tx.end());
  ctx.jy.setFromTriplets(ty.begin(), ty.end());
  ctx.jx2 = (ctx.jx * ctx.jx).pruned(1e-300);
  ctx.jy2 = (ctx.jy * ctx.jy).pruned(1e-300);
  return ctx;
}

ObservableRecord measure(const Eigen::Ref<const Mat>& sigma,
                         const ObservableContext& ctx, double t) {
  // Raw traces, no normalization: trace drift and leakage stay visible in
  // the reported numbers instead of being silently divided out.
  ObservableRecord r;
  r.t = t;
  double tr = 0.0;
  for (int i = 0; i < sigma.rows(); ++i) tr += sigma(i, i).real();
  r.trace = tr;

  r.jx = trace_prod(sigma, ctx.jx);
  r.jy = trace_prod(sigma, ctx.jy);
  r.jz = trace_diag(sigma, ctx.jz_diag);
  r.var_jx = trace_prod(sigma, ctx.jx2) - r.jx * r.jx;
  r.var_jy = trace_prod(sigma, ctx.jy2) - r.jy * r.jy;
  double jz2 = 0.0;
  for (int i = 0; i < ctx.jz_diag.size(); ++i)
    jz2 += ctx.jz_diag[i] * ctx.jz_diag[i] * sigma(i, i).real();
  r.var_jz = jz2 - r.jz * r.jz;
  r.jsq = trace_diag(sigma, ctx.jsq_diag);
  r.purity = sigma.squaredNorm();
  r.leakage = trace_diag(sigma, ctx.leak_mask);
  return r;
}

ObservableRecord measure(const Vec& psi, const ObservableContext& ctx,
                         double t) {
  const auto s = measure_traj(psi, ctx);
  ObservableRecord r;
  r.t = t;
  r.jx = s[0];
  r.jy = s[1];
  r.jz = s[2];
  r.var_jx = s[3] - s[0] * s[0];
  r.var_jy = s[4] - s[1] * s[1];
  r.var_jz = s[5] - s[2] * s[2];
  r.jsq = s[6];
  r.purity = 1.0;
  r.trace = psi.squaredNorm();
  double leak = 0.0;
  for (int i = 0; i < ctx.leak_mask.size(); ++i)
    if (ctx.leak_mask[i] != 0.0) leak += std::norm(psi[i]);
  r.leakage = leak;
  return r;
}

std::array<double, 7> measure_traj(const Vec& psi,
                                   const ObservableContext& ctx) {
  const Vec wx = ctx.jx * psi;
  const Vec wy = ctx.jy * psi;
  std::array<double, 7> out{};
  out[0] = psi.dot(wx).real();
  out[1] = psi.dot(wy).real();
  out[3] = wx.squaredNorm();
  out[4] = wy.squaredNorm();
  double jz = 0.0, jz2 = 0.0, jsq = 0.0;
  for (int i = 0; i < psi.size(); ++i) {
    const double p = std::norm(psi[i]);
    jz += ctx.jz_diag[i] * p;
    jz2 += ctx.jz_diag[i] * ctx.jz_diag[i] * p;
    jsq += ctx.jsq_diag[i] * p;
  }
  out[2] = jz;
  out[5] = jz2;
  out[6] = jsq;
  return out;
}

}  // namespace rotraman
