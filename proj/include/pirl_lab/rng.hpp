#pragma once

#include <cstdint>

namespace pirl_lab {

// Counter-based random stream (SplitMix64). The generator state is a plain
// counter run through an avalanche mix, so any (iteration, query, slot) cell
// of a run owns an independent sequence that does not depend on evaluation
// order or thread count.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : counter_(key) {}

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ull;
    return mix(counter_);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t counter_;
};

// Derives the stream keyed by (seed, a, b, c) via chained finalizer rounds.
inline RngStream make_stream(std::uint64_t seed, std::uint64_t a = 0,
                             std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = RngStream::mix(seed + 0x9E3779B97F4A7C15ull);
  k = RngStream::mix(k ^ (a + 0xBF58476D1CE4E5B9ull));
  k = RngStream::mix(k ^ (b + 0x94D049BB133111EBull));
  k = RngStream::mix(k ^ (c + 0x2545F4914F6CDD1Dull));
  return RngStream(k);
}

}  // namespace pirl_lab
