#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <tuple>
#include <vector>

#include "rotraman/common.hpp"
#include "rotraman/lindblad.hpp"
#include "rotraman/observables.hpp"
#include "rotraman/rng.hpp"

namespace rotraman {

// Step propagator G_h = exp(-i*H_eff*h) for a stationary drive, with lazily
// built dyadic fractions G_{h/2}, G_{h/4}, ... used to locate jump times
// inside a step. Fractions go down to h/2^40, which quantizes jump times to
// ~1e-12 of a step while keeping every no-jump application exact.
class StationaryPropagator {
 public:
  static constexpr int kMaxLevel = 40;

  StationaryPropagator(const Mat& H_eff, double h);

  const Mat& level(int k) const;  // G_{h / 2^k}, 0 <= k <= kMaxLevel
  double h() const { return h_; }

 private:
  double h_;
  Mat H_eff_;
  // Levels build lazily (deep ones are touched only when a jump needs
  // bisecting). Double-checked flags keep the hot path lock free when
  // several workers share one propagator.
  mutable std::vector<Mat> levels_;
  mutable std::array<std::atomic<bool>, kMaxLevel + 1> ready_{};
  mutable std::mutex build_mutex_;
};

// No-jump evolution psi(t1) = T exp(-i int H_eff dt) psi(t0), unnormalized.
// Stationary drives use the dense matrix exponential; time-dependent ones an
// adaptive embedded ODE chain at the lindblad relative tolerance.
Vec evolve_no_jump(const LindbladOps& ops, const Vec& psi, double t0,
                   double t1, double rel_tol = 1e-9);

// Earliest t in (t0, horizon] with ||psi(t)||^2 = R, by stepping at `step`
// plus bisection (relative time tolerance ~1e-12). Returns false if the
// horizon is reached first; psi_out then holds the unnormalized state at the
// horizon, otherwise the unnormalized pre-jump state at the returned time.
struct JumpSearch {
  bool found = false;
  double t = 0.0;
  Vec psi;  // unnormalized
};
JumpSearch sample_jump_time(const LindbladOps& ops, const Vec& psi, double t0,
                            double R, double horizon, double step = 0.0);

// Channel selection by cumulative-weight intervals: x if R' <= W_x, y if
// W_x < R' <= W_x + W_y, else z. Weights need not be normalized.
int select_channel_interval(const std::array<double, 3>& weights,
                            double r_prime);

// Full jump: weights W_i = ||S_i psi||^2 / sum, channel by the interval
// rule, post-jump state S_i psi normalized. Throws NumericalAbort when all
// weights vanish (no jump was possible).
struct JumpOutcome {
  int channel = -1;
  std::array<double, 3> weights{};
  Vec psi_after;  // normalized
};
JumpOutcome select_jump_channel(const LindbladOps& ops, const Vec& psi,
                                double t, double r_prime);

struct TrajectoryOptions {
  double t_max = 20.0;
  int n_points = 2000;
  double h = 0.0;  // step size; 0 or anything above the grid spacing means
                   // one step per grid interval (the propagator is exact, so
                   // the step only gates jump detection granularity)
  double leakage_threshold = 1e-6;
  double rel_tol = 1e-9;  // ODE path only
};

struct JumpEvent {
  double t = 0.0;
  int channel = -1;
};

struct TrajectoryResult {
  std::vector<Vec> psi_grid;  // normalized state at each output grid time
  std::vector<JumpEvent> jumps;
};

// One trajectory with a shared stationary propagator (requires
// ops.stationary). Deterministic function of (rng stream, ops, opt).
TrajectoryResult run_trajectory(const LindbladOps& ops,
                                const StationaryPropagator& prop,
                                const Vec& psi0, RngStream& rng,
                                const TrajectoryOptions& opt);

// Time-dependent engine: adaptive no-jump steps with bisected jump location.
TrajectoryResult run_trajectory_ode(const LindbladOps& ops, const Vec& psi0,
                                    RngStream& rng,
                                    const TrajectoryOptions& opt);

struct EnsembleOptions {
  int n_traj = 2000;
  std::uint64_t master_seed = 1;
  int n_threads = 1;
  double t_max = 20.0;
  int n_points = 2000;
  double h = 0.0;
  double leakage_threshold = 1e-6;
  double rel_tol = 1e-9;
  // Reduction layout. Batches of `batch` trajectories are accumulated in
  // index order whatever the thread count, so results are bit-stable.
  int batch = 16;
  int jk_groups = 16;   // jackknife groups, trajectory index mod jk_groups
  int err_stride = 16;  // grid stride for the purity jackknife accumulators
  int density_stride = 0;  // keep every k-th ensemble density matrix
  bool keep_jump_log = false;
};

struct EnsembleResult {
  ObservableSeries series;  // backend = "trajectories", se populated
  double mean_jumps = 0.0;
  double se_jumps = 0.0;
  long total_jumps = 0;
  std::array<long, 3> channel_counts{0, 0, 0};
  std::vector<double> density_times;
  std::vector<Mat> densities;
  // (trajectory, time, channel) triplets when keep_jump_log is set
  std::vector<std::tuple<int, double, int>> jump_log;
};

// Streaming production path: generates trajectories in batches (parallel
// within a batch), reduces deterministically. Works for stationary and
// time-dependent drives.
EnsembleResult run_ensemble(const LindbladOps& ops, const Vec& psi0,
                            const EnsembleOptions& opt);

// Reduction alone, for prebuilt records on a common grid (all psi_grid the
// same length). Same accumulation order as run_ensemble, so feeding it the
// same trajectories gives bit-identical results.
EnsembleResult ensemble_average(const std::vector<TrajectoryResult>& records,
                                const RotBasis& basis,
                                const std::vector<double>& grid,
                                const EnsembleOptions& opt);

}  // namespace rotraman
