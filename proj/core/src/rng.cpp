#include "dsmcsg/rng.hpp"

namespace dsmcsg {

namespace {
__extension__ using u128 = unsigned __int128;
}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t step, std::uint64_t substep,
                       std::uint64_t slot) noexcept {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ (step * 0xD1B54A32D192ED03ULL));
  k = splitmix64(k ^ (substep * 0xABC98388FB8FAC03ULL));
  k = splitmix64(k ^ (slot * 0x8CB92BA72F3D8DD7ULL));
  state_ = k;
}

std::uint64_t CounterRng::next_u64() noexcept {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double CounterRng::uniform01() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t CounterRng::below(std::uint64_t n) noexcept {
  // Lemire's multiply-shift with rejection.
  std::uint64_t x = next_u64();
  u128 m = static_cast<u128>(x) * n;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    const std::uint64_t t = (0 - n) % n;
    while (lo < t) {
      x = next_u64();
      m = static_cast<u128>(x) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace dsmcsg
