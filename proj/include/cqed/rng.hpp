#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace cqed {

/// SplitMix64 finaliser; used to decorrelate (seed, stream_id) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Sub-stream seed: splitmix64(splitmix64(seed) ^ splitmix64(~stream_id)).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream_id) {
  return splitmix64(splitmix64(seed) ^ splitmix64(~stream_id));
}

/// Mersenne-Twister (MT19937) stream for one trajectory. The 624-word state is
/// filled through std::seed_seq from the two 32-bit halves of stream_seed().
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
    const std::uint64_t s = stream_seed(seed, stream_id);
    std::seed_seq seq{static_cast<std::uint32_t>(s & 0xffffffffULL), static_cast<std::uint32_t>(s >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(engine_);
  }
  /// +1 or -1 with equal probability.
  double sign() { return (engine_() & 1u) ? 1.0 : -1.0; }

  std::mt19937& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cqed
