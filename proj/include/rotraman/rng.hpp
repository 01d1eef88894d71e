#pragma once

#include <cstdint>

namespace rotraman {

// Counter-based stream built on splitmix64. Each trajectory gets its own
// stream derived from (master_seed, stream_id), so results are independent
// of thread scheduling and of how many trajectories run.
class RngStream {
 public:
  static RngStream for_trajectory(std::uint64_t master_seed,
                                  std::uint64_t stream_id);

  std::uint64_t next_u64();

  // Uniform on (0, 1]; never returns 0 so log(u) and the jump-time equation
  // ||psi||^2 = R stay well defined.
  double next_unit();

 private:
  explicit RngStream(std::uint64_t state) : state_(state) {}
  std::uint64_t state_;
};

}  // namespace rotraman
