#include "rotraman/expmv.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

namespace rotraman {

namespace {

// exp(theta * Haug) * e1 via the eigendecomposition prepared once per
// Arnoldi sweep; falls back to Pade when the eigenbasis is unreliable.
struct SmallExp {
  Mat Haug;       // (k+2) x (k+2)
  Vec lambda;     // eigenvalues
  Mat U;          // eigenvectors
  Vec z;          // U^{-1} e1
  bool use_eig = false;

  void prepare(const Mat& H) {
    Haug = H;
    Eigen::ComplexEigenSolver<Mat> es(H);
    use_eig = (es.info() == Eigen::Success);
    if (!use_eig) return;
    lambda = es.eigenvalues();
    U = es.eigenvectors();
    Vec e1 = Vec::Zero(H.rows());
    e1[0] = 1.0;
    z = U.partialPivLu().solve(e1);
    // sanity of the eigenbasis: reconstruct H e1 and compare
    Vec he1 = U * (lambda.cwiseProduct(z));
    const double resid = (he1 - H.col(0)).norm();
    if (!(resid <= 1e-10 * (1.0 + H.norm()))) use_eig = false;
  }

  Vec column(double theta) const {
    if (use_eig) {
      Vec w = z;
      for (int i = 0; i < w.size(); ++i)
        w[i] *= std::exp(theta * lambda[i]);
      return U * w;
    }
    Mat F = (theta * Haug).exp();
    return F.col(0);
  }
};

}  // namespace

ExpmvStats expmv_grid(const ApplyFn& apply, double t, Vec& v,
                      const std::vector<double>& grid,
                      const std::function<void(double, const Vec&)>& emit,
                      const ExpmvOptions& opt) {
  ExpmvStats stats;
  const auto n = v.size();
  std::size_t gi = 0;
  while (gi < grid.size() && grid[gi] <= 0.0) emit(grid[gi++], v);
  if (t <= 0.0) return stats;

  const int m = std::min<int>(opt.m, static_cast<int>(n));
  Mat V(n, m + 1);
  Mat Hm(m + 2, m + 2);
  Vec w(n), c(m + 1), c2(m + 1);
  SmallExp small;

  double t_now = 0.0;
  double h = std::min(opt.h_init, t);
  const double t_end = t * (1.0 - 1e-15);

  while (t_now < t_end) {
    if (++stats.steps > opt.max_steps)
      throw NumericalAbort("expmv: step count exceeded " +
                           std::to_string(opt.max_steps));
    h = std::min(h, t - t_now);

    const double beta = v.norm();
    if (beta == 0.0) {
      while (gi < grid.size()) emit(grid[gi++], v);
      return stats;
    }

    // Arnoldi sweep with classical Gram-Schmidt plus a selective second pass
    V.col(0) = v / beta;
    Hm.setZero();
    int k = m;
    bool breakdown = false;
    double avnorm = 0.0;
    for (int j = 0; j < m; ++j) {
      apply(V.col(j), w);
      ++stats.matvecs;
      const double pre = w.norm();
      auto Vj = V.leftCols(j + 1);
      c.head(j + 1).noalias() = Vj.adjoint() * w;
      w.noalias() -= Vj * c.head(j + 1);
      double nrm = w.norm();
      if (nrm < 0.7 * pre) {  // significant cancellation, reorthogonalize
        c2.head(j + 1).noalias() = Vj.adjoint() * w;
        w.noalias() -= Vj * c2.head(j + 1);
        c.head(j + 1) += c2.head(j + 1);
        nrm = w.norm();
      }
      Hm.col(j).head(j + 1) = c.head(j + 1);
      Hm(j + 1, j) = nrm;
      if (nrm <= 1e-12 * pre || nrm == 0.0) {
        breakdown = true;
        k = j + 1;
        break;
      }
      V.col(j + 1) = w / nrm;
    }
    if (!breakdown) {
      apply(V.col(m), w);
      ++stats.matvecs;
      avnorm = w.norm();
    } else {
      V.col(k).setZero();
    }

    // augmented matrix: the two extra columns generate the local error
    // estimate a la Expokit
    Mat Haug = Mat::Zero(k + 2, k + 2);
    Haug.topLeftCorner(k, k) = Hm.topLeftCorner(k, k);
    Haug(k, k - 1) = Hm(k, k - 1);  // ~0 after a happy breakdown
    Haug(k + 1, k) = 1.0;
    small.prepare(Haug);

    // adapt h on the fixed Krylov data
    Vec f;
    double err_acc = 0.0, xm_acc = 1.0 / k;
    for (;;) {
      f = small.column(h);
      const double p1 = beta * std::abs(f[k]);
      const double p2 = beta * std::abs(f[k + 1]) * avnorm;
      double err_loc;
      double xm = 1.0 / k;
      if (p1 > 10.0 * p2) {
        err_loc = p2;
      } else if (p1 > p2) {
        err_loc = p1 * p2 / (p1 - p2);
      } else {
        err_loc = p1;
        xm = 1.0 / std::max(1, k - 1);
      }
      const double allowed = opt.tol * beta * std::max(h / t, 1e-16);
      if (err_loc <= 1.2 * allowed || h <= 1e-12 * t) {
        err_acc = std::max(err_loc, 1e-300);
        xm_acc = xm;
        break;
      }
      double fac = 0.9 * std::pow(allowed / err_loc, xm);
      fac = std::clamp(fac, 1.0 / 3.0, 0.9);
      h *= fac;
      ++stats.rejections;
    }

    // emit grid points inside (t_now, t_now + h], batched into one product
    std::vector<double> thetas;
    std::size_t g_first = gi;
    while (gi < grid.size() && grid[gi] <= t_now + h * (1.0 + 1e-14)) {
      thetas.push_back(std::min(grid[gi] - t_now, h));
      ++gi;
    }
    if (!thetas.empty()) {
      Mat C(k + 1, thetas.size());
      for (std::size_t i = 0; i < thetas.size(); ++i)
        C.col(i) = small.column(thetas[i]).head(k + 1);
      Mat W = V.leftCols(k + 1) * (beta * C);
      for (std::size_t i = 0; i < thetas.size(); ++i)
        emit(grid[g_first + i], W.col(i));
    }

    v.noalias() = V.leftCols(k + 1) * (beta * f.head(k + 1));

    // next step suggestion from the accepted local error
    const double allowed = opt.tol * beta * std::max(h / t, 1e-16);
    const double fac = 0.9 * std::pow(allowed / err_acc, xm_acc);
    t_now += h;
    h *= std::clamp(fac, 0.3, 2.5);
  }
  while (gi < grid.size()) emit(grid[gi++], v);
  return stats;
}

}  // namespace rotraman
