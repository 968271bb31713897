#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace exmarket {

// sub-streams of one replication; each purpose draws from its own sequence so
// that the number of draws made for one purpose never shifts another
enum class Purpose : std::uint64_t {
  kWaiting = 1,
  kSelection = 2,
  kFlip = 3,
  kNoise = 4,
  kInitial = 5,
  kBrownianQ = 6,
  kBrownianX = 7,
  kBootstrap = 8,
};

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the k-th output is mix64(key + k * golden), so a
/// stream is fully described by (key, counter). Models
/// std::uniform_random_bit_generator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr CounterRng() noexcept = default;
  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + (++counter_) * kGolden);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

constexpr std::uint64_t stream_key(std::uint64_t base_seed, std::uint64_t replication,
                                   Purpose purpose) noexcept {
  std::uint64_t k = mix64(base_seed ^ 0x6A09E667F3BCC909ULL);
  k = mix64(k ^ (replication * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  k = mix64(k ^ (static_cast<std::uint64_t>(purpose) * 0xA24BAED4963EE407ULL));
  return k;
}

constexpr CounterRng make_stream(std::uint64_t base_seed, std::uint64_t replication,
                                 Purpose purpose) noexcept {
  return CounterRng{stream_key(base_seed, replication, purpose)};
}

// [0, 1) with 53 random bits
template <class Rng>
inline double uniform01(Rng& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Rng>
inline double standard_exponential(Rng& rng) noexcept {
  return -std::log1p(-uniform01(rng));
}

// uniform integer in [0, bound) by multiply-shift; bias is < bound / 2^64
template <class Rng>
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) noexcept {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

}  // namespace exmarket
