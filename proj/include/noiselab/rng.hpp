#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace noiselab {

namespace rngdetail {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer. Counter-mode use of this mixer (state = key + i*golden)
// is the standard splitmix64 stream, which is statistically sound and lets any
// sample be addressed by index without sequential state.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline constexpr double to_unit(std::uint64_t x) {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace rngdetail

/// Stream tags keep the independent uses of randomness in one training run on
/// non-colliding keys.
enum class StreamTag : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  TrainNoise = 3,
  EvalNoise = 4,
  Data = 5,
  Synth = 6,
  Test = 7,
};

/// Counter-based splittable random stream.
///
/// A stream is fully determined by its key; forking with a coordinate
/// (run, epoch, batch, layer, ...) derives a statistically independent child
/// stream, and every sample is addressable by position, so any sequence can be
/// replayed by rebuilding the stream with the same coordinates.
class RngStream {
 public:
  RngStream() = default;

  static RngStream root(std::uint64_t seed) {
    RngStream s;
    s.key_ = rngdetail::mix64(seed ^ 0x6A09E667F3BCC908ull);
    return s;
  }

  RngStream fork(std::uint64_t coordinate) const {
    RngStream s;
    s.key_ = rngdetail::mix64(key_ ^ rngdetail::mix64(coordinate + rngdetail::kGolden));
    return s;
  }
  RngStream fork(StreamTag tag) const { return fork(static_cast<std::uint64_t>(tag)); }

  std::uint64_t key() const { return key_; }

  /// Raw 64 random bits at position i.
  std::uint64_t bits_at(std::uint64_t i) const {
    return rngdetail::mix64(key_ + (i + 1) * rngdetail::kGolden);
  }

  /// Uniform double in [0, 1) at position i.
  double uniform_at(std::uint64_t i) const { return rngdetail::to_unit(bits_at(i)); }

  /// Standard normal at position i (Box-Muller, cosine branch; consumes two
  /// uniform positions so normals at distinct indices are independent).
  double normal_at(std::uint64_t i) const {
    const double u1 = 1.0 - uniform_at(2 * i);  // (0, 1]
    const double u2 = uniform_at(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Sequential draws for call sites that do not need positional replay.
  // normal() consumes two positions so it never overlaps later draws.
  std::uint64_t bits() { return bits_at(cursor_++); }
  double uniform() { return rngdetail::to_unit(bits()); }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t cursor_ = 0;
};

}  // namespace noiselab
