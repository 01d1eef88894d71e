#include "rotraman/trajectories.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <memory>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "ode.hpp"

namespace rotraman {

namespace {

constexpr std::uint64_t kFull = std::uint64_t(1)
                                << StationaryPropagator::kMaxLevel;

// Population with j >= j_max - 2. Lexicographic layout puts those states in
// a contiguous tail starting at (j_max - 2)^2.
double tail_leakage(const Vec& psi, int j_max) {
  const int lo = (j_max - 2) * (j_max - 2);
  return psi.tail(psi.size() - lo).squaredNorm();
}

[[noreturn]] void abort_leakage(double leak, double limit, double t) {
  std::ostringstream os;
  os << "trajectories: leakage = " << leak << " exceeds " << limit
     << " at t = " << t;
  throw NumericalAbort(os.str());
}

// Jump-sum effective Hamiltonian at time t, matching the channels the
// unraveling actually applies. The closed shifted form build_H_eff differs
// from this at the truncation edge (incomplete downward ladders), which
// would let the no-jump norm decay drift away from the total jump hazard.
Mat effective_h(const LindbladOps& ops, double t) {
  Mat H = ops.cpl.h_rot + build_H_R(ops.cpl, ops.field, t);
  const auto S = build_jumps(ops.cpl, ops.field, t);
  Mat Q = S[0].adjoint() * S[0];
  Q.noalias() += S[1].adjoint() * S[1];
  Q.noalias() += S[2].adjoint() * S[2];
  return H - 0.5 * iu * Q;
}

}  // namespace

StationaryPropagator::StationaryPropagator(const Mat& H_eff, double h)
    : h_(h), H_eff_(H_eff), levels_(kMaxLevel + 1) {
  if (!(h > 0.0))
    throw std::invalid_argument("StationaryPropagator: h must be positive");
  level(0);
}

const Mat& StationaryPropagator::level(int k) const {
  if (k < 0 || k > kMaxLevel)
    throw std::out_of_range("StationaryPropagator: level out of range");
  if (ready_[k].load(std::memory_order_acquire)) return levels_[k];
  std::lock_guard<std::mutex> lock(build_mutex_);
  if (!ready_[k].load(std::memory_order_relaxed)) {
    const double hk = std::ldexp(h_, -k);
    levels_[k] = ((-iu * hk) * H_eff_).exp();
    ready_[k].store(true, std::memory_order_release);
  }
  return levels_[k];
}

Vec evolve_no_jump(const LindbladOps& ops, const Vec& psi, double t0,
                   double t1, double rel_tol) {
  if (t1 <= t0) return psi;
  if (ops.stationary) return ((-iu * (t1 - t0)) * ops.H_eff).exp() * psi;

  Vec y = psi;
  detail::Dp5 stepper(
      [&ops](double t, const Vec& x, Vec& dx) {
        dx.noalias() = effective_h(ops, t) * x;
        dx *= -iu;
      },
      rel_tol, 1e-12);
  double t = t0;
  stepper.advance(t, y, t1);
  return y;
}

namespace {

// exp(-i H_eff dt) psi through a one-time eigenfactorization, so a bisection
// can probe arbitrary offsets from a saved state at GEMV cost per probe.
class EigPropagator {
 public:
  explicit EigPropagator(const Mat& H_eff) {
    Eigen::ComplexEigenSolver<Mat> es(H_eff);
    if (es.info() != Eigen::Success)
      throw NumericalAbort("trajectories: eigensolver failed on H_eff");
    V_ = es.eigenvectors();
    lam_ = es.eigenvalues();
    lu_.compute(V_);
  }

  Vec apply(const Vec& psi, double dt) const {
    Vec z = lu_.solve(psi);
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z[i] *= std::exp(-iu * (lam_[i] * dt));
    return V_ * z;
  }

 private:
  Mat V_;
  Vec lam_;
  Eigen::PartialPivLU<Mat> lu_;
};

}  // namespace

JumpSearch sample_jump_time(const LindbladOps& ops, const Vec& psi, double t0,
                            double R, double horizon, double step) {
  JumpSearch out;
  if (horizon <= t0)
    throw std::invalid_argument("sample_jump_time: horizon must exceed t0");
  if (psi.squaredNorm() < R) {
    out.found = true;
    out.t = t0;
    out.psi = psi;
    return out;
  }
  const double span = horizon - t0;
  if (step <= 0.0 || step > span) step = span;
  const double t_tol = 1e-12 * std::max(1.0, std::abs(horizon));

  if (ops.stationary) {
    const EigPropagator eig(ops.H_eff);
    double a = t0;
    Vec psi_a = psi;
    while (a < horizon) {
      const double b = std::min(a + step, horizon);
      Vec psi_b = eig.apply(psi_a, b - a);
      if (psi_b.squaredNorm() >= R) {
        a = b;
        psi_a.swap(psi_b);
        continue;
      }
      // crossing in (a, b]: bisect in continuous time from the saved state
      double lo = a, hi = b;
      while (hi - lo > t_tol) {
        const double mid = 0.5 * (lo + hi);
        if (eig.apply(psi_a, mid - a).squaredNorm() >= R)
          lo = mid;
        else
          hi = mid;
      }
      out.found = true;
      out.t = hi;
      out.psi = eig.apply(psi_a, hi - a);
      return out;
    }
    out.found = false;
    out.t = horizon;
    out.psi = psi_a;
    return out;
  }

  // Time-dependent drive: adaptive integration with a crossing watch, then
  // bisection by re-integration from the last pre-crossing state.
  auto rhs = [&ops](double t, const Vec& x, Vec& dx) {
    dx.noalias() = effective_h(ops, t) * x;
    dx *= -iu;
  };
  detail::Dp5 stepper(rhs, 1e-10, 1e-13);
  double a = t0;
  Vec psi_a = psi;
  double t_cur = t0;
  Vec y = psi;
  const bool reached = stepper.advance(t_cur, y, horizon,
                                       [&](double t, const Vec& w) {
                                         if (w.squaredNorm() >= R) {
                                           a = t;
                                           psi_a = w;
                                           return true;
                                         }
                                         return false;
                                       });
  if (reached) {
    out.found = false;
    out.t = horizon;
    out.psi = y;
    return out;
  }
  double lo = a, hi = t_cur;
  Vec psi_hi = y;
  while (hi - lo > t_tol) {
    const double mid = 0.5 * (lo + hi);
    detail::Dp5 inner(rhs, 1e-10, 1e-13);
    double t = lo;
    Vec w = psi_a;
    inner.advance(t, w, mid);
    if (w.squaredNorm() >= R) {
      lo = mid;
      psi_a.swap(w);
    } else {
      hi = mid;
      psi_hi.swap(w);
    }
  }
  out.found = true;
  out.t = hi;
  out.psi = psi_hi;
  return out;
}

int select_channel_interval(const std::array<double, 3>& weights,
                            double r_prime) {
  const double total = weights[0] + weights[1] + weights[2];
  const double x = r_prime * total;
  if (x <= weights[0]) return 0;
  if (x <= weights[0] + weights[1]) return 1;
  return 2;
}

JumpOutcome select_jump_channel(const LindbladOps& ops, const Vec& psi,
                                double t, double r_prime) {
  JumpOutcome out;
  std::array<Vec, 3> jumped;
  if (ops.stationary) {
    for (int i = 0; i < 3; ++i) jumped[i] = ops.S_sp[i] * psi;
  } else {
    const auto S = build_jumps(ops.cpl, ops.field, t);
    for (int i = 0; i < 3; ++i) jumped[i] = S[i] * psi;
  }
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    out.weights[i] = jumped[i].squaredNorm();
    total += out.weights[i];
  }
  if (!(total > 0.0))
    throw NumericalAbort(
        "trajectories: jump requested but all channel weights vanish at t = " +
        std::to_string(t));
  for (auto& w : out.weights) w /= total;
  out.channel = select_channel_interval(out.weights, r_prime);
  out.psi_after = jumped[out.channel] / jumped[out.channel].norm();
  return out;
}

namespace {

// Walks one propagator step of length h from `pos` quanta (of h / 2^40) past
// the step start, applying dyadic propagators greedily and locating norm
// crossings to single-quantum resolution. The caller handles the jump and
// re-enters with the post-jump state at the returned position.
struct StepCrossing {
  bool crossed = false;
  std::uint64_t pos = 0;  // first position with ||psi||^2 < R
  Vec psi;                // state at pos (pre-jump, unnormalized)
};

StepCrossing walk_step(const StationaryPropagator& prop, Vec psi,
                       std::uint64_t pos, double R) {
  StepCrossing out;
  while (pos < kFull) {
    const std::uint64_t remaining = kFull - pos;
    int p = 63 - std::countl_zero(remaining);  // largest 2^p <= remaining
    Vec trial = prop.level(StationaryPropagator::kMaxLevel - p) * psi;
    if (trial.squaredNorm() >= R) {
      pos += std::uint64_t(1) << p;
      psi.swap(trial);
      continue;
    }
    // Crossing inside this chunk. Halve until the chunk is one quantum,
    // keeping `psi` at `pos` with norm^2 >= R.
    while (p > 0) {
      --p;
      Vec half = prop.level(StationaryPropagator::kMaxLevel - p) * psi;
      if (half.squaredNorm() >= R) {
        pos += std::uint64_t(1) << p;
        psi.swap(half);
      }
    }
    out.crossed = true;
    out.pos = pos + 1;
    out.psi = prop.level(StationaryPropagator::kMaxLevel) * psi;
    return out;
  }
  out.crossed = false;
  out.pos = kFull;
  out.psi = std::move(psi);
  return out;
}

}  // namespace

TrajectoryResult run_trajectory(const LindbladOps& ops,
                                const StationaryPropagator& prop,
                                const Vec& psi0, RngStream& rng,
                                const TrajectoryOptions& opt) {
  if (!ops.stationary)
    throw std::invalid_argument(
        "run_trajectory: stationary drive required (use run_trajectory_ode)");
  if (opt.n_points < 2)
    throw std::invalid_argument("run_trajectory: n_points must be >= 2");
  const double grid_dt = opt.t_max / (opt.n_points - 1);
  int spg = 1;  // propagator steps per grid interval
  if (opt.h > 0.0 && opt.h < grid_dt) {
    spg = static_cast<int>(std::llround(grid_dt / opt.h));
    if (std::abs(spg * opt.h - grid_dt) > 1e-9 * grid_dt)
      throw std::invalid_argument(
          "run_trajectory: h must divide the grid spacing");
  }
  const double h = grid_dt / spg;
  if (std::abs(prop.h() - h) > 1e-12 * h)
    throw std::invalid_argument(
        "run_trajectory: propagator step does not match the grid");

  TrajectoryResult res;
  res.psi_grid.reserve(opt.n_points);

  Vec psi = psi0.normalized();
  res.psi_grid.push_back(psi);
  // Draw order per trajectory: R after every (re)normalization, then r' at
  // each jump. Changing it changes every seeded result.
  double R = rng.next_unit();

  for (int k = 1; k < opt.n_points; ++k) {
    for (int s = 0; s < spg; ++s) {
      const double t_step = ((k - 1) * spg + s) * h;
      std::uint64_t pos = 0;
      for (;;) {
        auto walk = walk_step(prop, std::move(psi), pos, R);
        if (!walk.crossed) {
          psi = std::move(walk.psi);
          break;
        }
        pos = walk.pos;
        const double t_jump =
            t_step + static_cast<double>(pos) *
                         std::ldexp(h, -StationaryPropagator::kMaxLevel);
        const auto jump =
            select_jump_channel(ops, walk.psi, t_jump, rng.next_unit());
        res.jumps.push_back({t_jump, jump.channel});
        psi = jump.psi_after;
        R = rng.next_unit();
      }
    }
    const Vec snap = psi.normalized();
    const double leak = tail_leakage(snap, ops.basis.j_max);
    if (leak > opt.leakage_threshold)
      abort_leakage(leak, opt.leakage_threshold, k * grid_dt);
    res.psi_grid.push_back(snap);
  }
  return res;
}

TrajectoryResult run_trajectory_ode(const LindbladOps& ops, const Vec& psi0,
                                    RngStream& rng,
                                    const TrajectoryOptions& opt) {
  if (opt.n_points < 2)
    throw std::invalid_argument("run_trajectory_ode: n_points must be >= 2");
  const double grid_dt = opt.t_max / (opt.n_points - 1);

  TrajectoryResult res;
  res.psi_grid.reserve(opt.n_points);
  Vec psi = psi0.normalized();
  res.psi_grid.push_back(psi);
  double R = rng.next_unit();
  double t = 0.0;

  for (int k = 1; k < opt.n_points; ++k) {
    const double t_k = k * grid_dt;
    while (t < t_k) {
      const auto search = sample_jump_time(ops, psi, t, R, t_k);
      if (!search.found) {
        t = t_k;
        psi = search.psi;
        break;
      }
      const auto jump =
          select_jump_channel(ops, search.psi, search.t, rng.next_unit());
      res.jumps.push_back({search.t, jump.channel});
      t = search.t;
      psi = jump.psi_after;
      R = rng.next_unit();
    }
    // psi stays unnormalized between jumps (its norm is the no-jump survival
    // probability against the current R); only the snapshot is normalized.
    const Vec snap = psi.normalized();
    const double leak = tail_leakage(snap, ops.basis.j_max);
    if (leak > opt.leakage_threshold)
      abort_leakage(leak, opt.leakage_threshold, t_k);
    res.psi_grid.push_back(snap);
  }
  return res;
}

namespace {

double frob2_lower(const Mat& M) {
  double diag = 0.0, off = 0.0;
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    diag += std::norm(M(j, j));
    for (Eigen::Index i = j + 1; i < M.rows(); ++i) off += std::norm(M(i, j));
  }
  return diag + 2.0 * off;
}

// Deterministic streaming reduction. add_batch must be called with the same
// batch boundaries and trajectory order regardless of how the trajectories
// were produced; everything here is single threaded.
class Reducer {
 public:
  Reducer(const RotBasis& basis, const std::vector<double>& grid,
          const EnsembleOptions& opt)
      : basis_(basis),
        grid_(grid),
        opt_(opt),
        ctx_(make_observable_context(basis)),
        n_(basis.size()),
        n_points_(static_cast<int>(grid.size())),
        groups_(std::max(1, std::min(opt.jk_groups, opt.n_traj))),
        err_stride_(std::max(1, opt.err_stride)) {
    sum_.setZero(7, n_points_);
    sumsq_.setZero(7, n_points_);
    group_sum_.assign(groups_, Eigen::MatrixXd::Zero(7, n_points_));
    M_.assign(n_points_, Mat::Zero(n_, n_));
    n_strided_ = (n_points_ + err_stride_ - 1) / err_stride_;
    if (groups_ > 1)
      Mg_.assign(static_cast<std::size_t>(n_strided_) * groups_,
                 Eigen::MatrixXcf::Zero(n_, n_));
    group_count_.assign(groups_, 0);
  }

  int groups() const { return groups_; }

  void add_batch(int start_index, const TrajectoryResult* batch, int count) {
    // Batched mean-density update: one rank-`count` update per grid point
    // beats `count` rank-1 updates on cache traffic.
    Mat block(n_, count);
    for (int k = 0; k < n_points_; ++k) {
      for (int s = 0; s < count; ++s) block.col(s) = batch[s].psi_grid[k];
      M_[k].selfadjointView<Eigen::Lower>().rankUpdate(block, 1.0);
    }
    for (int s = 0; s < count; ++s) {
      const int idx = start_index + s;
      const int g = idx % groups_;
      ++group_count_[g];
      const auto& traj = batch[s];
      for (int k = 0; k < n_points_; ++k) {
        const auto x = measure_traj(traj.psi_grid[k], ctx_);
        for (int c = 0; c < 7; ++c) {
          sum_(c, k) += x[c];
          sumsq_(c, k) += x[c] * x[c];
          group_sum_[g](c, k) += x[c];
        }
        if (groups_ > 1 && k % err_stride_ == 0) {
          const Eigen::VectorXcf pf = traj.psi_grid[k].cast<std::complex<float>>();
          Mg_[static_cast<std::size_t>(k / err_stride_) * groups_ + g]
              .selfadjointView<Eigen::Lower>()
              .rankUpdate(pf, 1.0f);
        }
      }
      total_jumps_ += static_cast<long>(traj.jumps.size());
      const double nj = static_cast<double>(traj.jumps.size());
      jump_sum_ += nj;
      jump_sumsq_ += nj * nj;
      for (const auto& ev : traj.jumps) {
        ++channel_counts_[ev.channel];
        if (opt_.keep_jump_log) jump_log_.emplace_back(idx, ev.t, ev.channel);
      }
      ++added_;
    }
  }

  EnsembleResult finish() const {
    EnsembleResult out;
    const int N = added_;
    const double invN = 1.0 / N;
    out.series.backend = "trajectories";
    out.series.rows.resize(n_points_);
    out.series.se.resize(n_points_);

    for (int k = 0; k < n_points_; ++k) {
      auto& r = out.series.rows[k];
      auto& se = out.series.se[k];
      r.t = grid_[k];
      const double jx = sum_(0, k) * invN, jy = sum_(1, k) * invN,
                   jz = sum_(2, k) * invN;
      r.jx = jx;
      r.jy = jy;
      r.jz = jz;
      r.var_jx = sum_(3, k) * invN - jx * jx;
      r.var_jy = sum_(4, k) * invN - jy * jy;
      r.var_jz = sum_(5, k) * invN - jz * jz;
      r.jsq = sum_(6, k) * invN;
      r.purity = frob2_lower(M_[k]) * invN * invN;
      double tr = 0.0, leak = 0.0;
      const int lo = (basis_.j_max - 2) * (basis_.j_max - 2);
      for (int i = 0; i < n_; ++i) {
        const double d = M_[k](i, i).real();
        tr += d;
        if (i >= lo) leak += d;
      }
      r.trace = tr * invN;
      r.leakage = leak * invN;

      if (N > 1) {
        auto se_mean = [&](int c) {
          const double var =
              (sumsq_(c, k) - sum_(c, k) * sum_(c, k) * invN) / (N - 1);
          return std::sqrt(std::max(0.0, var) * invN);
        };
        se.jx = se_mean(0);
        se.jy = se_mean(1);
        se.jz = se_mean(2);
        se.jsq = se_mean(6);
      }
    }

    if (groups_ > 1) jackknife(out);

    out.mean_jumps = jump_sum_ * invN;
    if (N > 1) {
      const double var =
          (jump_sumsq_ - jump_sum_ * jump_sum_ * invN) / (N - 1);
      out.se_jumps = std::sqrt(std::max(0.0, var) * invN);
    }
    out.total_jumps = total_jumps_;
    out.channel_counts = channel_counts_;
    out.jump_log = jump_log_;

    if (opt_.density_stride > 0) {
      for (int k = 0; k < n_points_; ++k) {
        if (k % opt_.density_stride != 0 && k != n_points_ - 1) continue;
        Mat sigma = Mat(M_[k].selfadjointView<Eigen::Lower>()) * invN;
        out.density_times.push_back(grid_[k]);
        out.densities.push_back(std::move(sigma));
      }
    }
    return out;
  }

 private:
  void jackknife(EnsembleResult& out) const {
    const int N = added_;
    const int G = groups_;
    const double jk_pref = static_cast<double>(G - 1) / G;

    // Leave-one-group-out estimates for the variance observables.
    std::vector<std::array<double, 3>> vals(G);
    for (int k = 0; k < n_points_; ++k) {
      for (int g = 0; g < G; ++g) {
        const double Ng = N - group_count_[g];
        const double inv = 1.0 / Ng;
        for (int a = 0; a < 3; ++a) {
          const double m1 = (sum_(a, k) - group_sum_[g](a, k)) * inv;
          const double m2 = (sum_(a + 3, k) - group_sum_[g](a + 3, k)) * inv;
          vals[g][a] = m2 - m1 * m1;
        }
      }
      std::array<double, 3> acc{};
      for (int a = 0; a < 3; ++a) {
        double mean = 0.0;
        for (int g = 0; g < G; ++g) mean += vals[g][a];
        mean /= G;
        double ss = 0.0;
        for (int g = 0; g < G; ++g)
          ss += (vals[g][a] - mean) * (vals[g][a] - mean);
        acc[a] = std::sqrt(jk_pref * ss);
      }
      out.series.se[k].var_jx = acc[0];
      out.series.se[k].var_jy = acc[1];
      out.series.se[k].var_jz = acc[2];
    }

    // Purity jackknife on the strided grid, nearest-fill elsewhere.
    std::vector<double> se_strided(n_strided_, 0.0);
    for (int ks = 0; ks < n_strided_; ++ks) {
      const int k = ks * err_stride_;
      std::vector<double> vals(G, 0.0);
      for (int g = 0; g < G; ++g) {
        const double Ng = N - group_count_[g];
        if (Ng <= 0) continue;
        // Tr of the leave-out mean squared: expand (M - Mg)/(N - Ng).
        double f2 = 0.0;
        {
          // ||M - Mg||_F^2 from lower halves
          const auto& Mg = Mg_[static_cast<std::size_t>(ks) * G + g];
          double diag = 0.0, off = 0.0;
          for (int j = 0; j < n_; ++j) {
            const cdouble d = M_[k](j, j) - cdouble(Mg(j, j));
            diag += std::norm(d);
            for (int i = j + 1; i < n_; ++i) {
              const cdouble o = M_[k](i, j) - cdouble(Mg(i, j));
              off += std::norm(o);
            }
          }
          f2 = diag + 2.0 * off;
        }
        vals[g] = f2 / (Ng * Ng);
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= G;
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      se_strided[ks] = std::sqrt(jk_pref * ss);
    }
    for (int k = 0; k < n_points_; ++k) {
      const int ks = std::min((k + err_stride_ / 2) / err_stride_,
                              n_strided_ - 1);
      out.series.se[k].purity = se_strided[ks];
    }
  }

  RotBasis basis_;
  std::vector<double> grid_;
  EnsembleOptions opt_;
  ObservableContext ctx_;
  int n_;
  int n_points_;
  int groups_;
  int err_stride_;
  int n_strided_ = 0;

  Eigen::MatrixXd sum_, sumsq_;             // 7 x n_points
  std::vector<Eigen::MatrixXd> group_sum_;  // per group, 7 x n_points
  std::vector<Mat> M_;                      // sum of psi psi^dag (lower half)
  std::vector<Eigen::MatrixXcf> Mg_;        // per (strided point, group)
  std::vector<int> group_count_;

  int added_ = 0;
  long total_jumps_ = 0;
  double jump_sum_ = 0.0, jump_sumsq_ = 0.0;
  std::array<long, 3> channel_counts_{0, 0, 0};
  std::vector<std::tuple<int, double, int>> jump_log_;
};

std::vector<double> make_grid(double t_max, int n_points) {
  std::vector<double> grid(n_points);
  for (int k = 0; k < n_points; ++k) grid[k] = t_max * k / (n_points - 1);
  return grid;
}

}  // namespace

EnsembleResult run_ensemble(const LindbladOps& ops, const Vec& psi0,
                            const EnsembleOptions& opt) {
  if (opt.n_traj < 1)
    throw std::invalid_argument("run_ensemble: n_traj must be >= 1");
  if (opt.n_points < 2)
    throw std::invalid_argument("run_ensemble: n_points must be >= 2");

  TrajectoryOptions topt;
  topt.t_max = opt.t_max;
  topt.n_points = opt.n_points;
  topt.h = opt.h;
  topt.leakage_threshold = opt.leakage_threshold;
  topt.rel_tol = opt.rel_tol;

  std::unique_ptr<StationaryPropagator> prop;
  if (ops.stationary) {
    const double grid_dt = opt.t_max / (opt.n_points - 1);
    int spg = 1;
    if (opt.h > 0.0 && opt.h < grid_dt)
      spg = static_cast<int>(std::llround(grid_dt / opt.h));
    prop = std::make_unique<StationaryPropagator>(ops.H_eff, grid_dt / spg);
  }

  const auto grid = make_grid(opt.t_max, opt.n_points);
  Reducer red(ops.basis, grid, opt);

  const int batch = std::max(1, opt.batch);
  const int n_threads = std::max(1, opt.n_threads);
  std::vector<TrajectoryResult> slots(batch);

  auto produce = [&](int global_index) {
    RngStream rng = RngStream::for_trajectory(opt.master_seed,
                                              static_cast<std::uint64_t>(global_index));
    return ops.stationary ? run_trajectory(ops, *prop, psi0, rng, topt)
                          : run_trajectory_ode(ops, psi0, rng, topt);
  };

  for (int start = 0; start < opt.n_traj; start += batch) {
    const int count = std::min(batch, opt.n_traj - start);
    if (n_threads == 1 || count == 1) {
      for (int s = 0; s < count; ++s) slots[s] = produce(start + s);
    } else {
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> errors(n_threads);
      for (int w = 0; w < std::min(n_threads, count); ++w) {
        workers.emplace_back([&, w] {
          try {
            for (int s = w; s < count; s += n_threads)
              slots[s] = produce(start + s);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& th : workers) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    red.add_batch(start, slots.data(), count);
  }
  return red.finish();
}

EnsembleResult ensemble_average(const std::vector<TrajectoryResult>& records,
                                const RotBasis& basis,
                                const std::vector<double>& grid,
                                const EnsembleOptions& opt) {
  if (records.empty())
    throw std::invalid_argument("ensemble_average: no records");
  for (const auto& r : records)
    if (r.psi_grid.size() != grid.size())
      throw std::invalid_argument("ensemble_average: grid length mismatch");

  EnsembleOptions eopt = opt;
  eopt.n_traj = static_cast<int>(records.size());
  Reducer red(basis, grid, eopt);
  const int batch = std::max(1, opt.batch);
  for (int start = 0; start < eopt.n_traj; start += batch) {
    const int count = std::min(batch, eopt.n_traj - start);
    red.add_batch(start, records.data() + start, count);
  }
  return red.finish();
}

}  // namespace rotraman
