#pragma once

#include <cstdint>
#include <vector>

namespace radpert {

/// SplitMix64: a small, fully portable 64-bit generator. All randomness in
/// the artifact flows through this class so that a seed reproduces the same
/// byte stream on every platform (std::mt19937 distributions are
/// implementation-defined; this is not).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Unbiased draw in [0, n). Rejection on the top sliver of the 64-bit
  /// range keeps the result uniform.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = next();
      if (x >= threshold) return x % n;
    }
  }

 private:
  std::uint64_t state_;
};

/// Stream seed for sub-stream `stream` of a master seed. Each bootstrap
/// replicate r uses mix_seed(master, r), which makes replicates independent
/// of execution order (parallel == sequential).
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  SplitMix64 g(master ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
  return g.next();
}

/// The n-out-of-n resample used by every bootstrap replicate.
inline std::vector<std::size_t> resample_indices(std::uint64_t master_seed,
                                                 std::uint64_t replicate,
                                                 std::size_t n) {
  SplitMix64 g(mix_seed(master_seed, replicate));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = static_cast<std::size_t>(g.next_below(n));
  }
  return idx;
}

}  // namespace radpert
