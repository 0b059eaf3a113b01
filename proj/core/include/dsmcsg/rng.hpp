#pragma once

// Counter-based random streams. Every stochastic choice in a run is keyed
// by (seed, step, substep, slot), so draws do not depend on the order in
// which collision events are processed or on the thread count.

#include <cstdint>

namespace dsmcsg {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t step, std::uint64_t substep, std::uint64_t slot) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in the open interval (0, 1).
  double uniform01() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  std::uint64_t state_;
};

/// Slot values reserved for per-step bookkeeping draws; event slots count
/// up from zero.
inline constexpr std::uint64_t kSlotRounding = 0xFFFFFFFF00000001ULL;
inline constexpr std::uint64_t kSlotSelection = 0xFFFFFFFF00000002ULL;
inline constexpr std::uint64_t kStepInit = 0xFFFFFFFFFFFFFFF0ULL;

}  // namespace dsmcsg
