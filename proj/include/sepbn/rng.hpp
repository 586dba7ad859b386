#pragma once

#include <cstdint>

namespace sepbn {

// Stream tags so independent consumers of the same (seed, epoch, index) key
// never share draws.
enum class StreamTag : std::uint64_t {
  MainAugment = 0,
  AuxAugment = 1,
  Shuffle = 2,
  Init = 3,
  Synthetic = 4,
  Corruption = 5,
  Fourier = 6,
  Affinity = 7,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based random stream. The i-th draw is a pure function of the key
/// and i, so results do not depend on evaluation order or thread count.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index, StreamTag tag);
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi].
  int range(int lo, int hi);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  std::uint64_t poisson(double mean);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sepbn
