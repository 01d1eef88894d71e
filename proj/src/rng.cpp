#include "rotraman/rng.hpp"

namespace rotraman {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

RngStream RngStream::for_trajectory(std::uint64_t master_seed,
                                    std::uint64_t stream_id) {
  // Nonlinear combine of seed and stream id. A plain master + id*gamma start
  // would alias stream k with stream 0 shifted by k draws; double mixing
  // breaks that lattice.
  const std::uint64_t a = mix(stream_id + kGamma);
  return RngStream(mix(master_seed ^ (a * 0xBF58476D1CE4E5B9ull)) ^ a);
}

std::uint64_t RngStream::next_u64() {
  state_ += kGamma;
  return mix(state_);
}

double RngStream::next_unit() {
  // 53-bit mantissa, shifted into (0, 1]
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

}  // namespace rotraman
