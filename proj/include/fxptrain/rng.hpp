#pragma once

#include <cstdint>

namespace fxptrain {

// splitmix64 finalizer. All counter-derived randomness in the library goes
// through this, so results depend only on (seed, counter), never on thread
// scheduling.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derive an independent substream seed from a base seed and up to three tags
// (iteration, layer id, purpose, ...).
constexpr std::uint64_t substream(std::uint64_t seed, std::uint64_t a = 0,
                                  std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix64(seed);
  s = mix64(s ^ a);
  s = mix64(s ^ b);
  s = mix64(s ^ c);
  return s;
}

// Counter-based uniform stream. uniform_at(i) reads draw (counter + i)
// without mutating state, which lets elementwise kernels consume a block of
// draws from any number of threads and still produce bit-identical output.
// advance(n) commits n draws; next() is the serial convenience form.
class StreamRng {
 public:
  explicit StreamRng(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  // Uniform double in [0, 1) for draw (counter + i).
  double uniform_at(std::uint64_t i) const {
    const std::uint64_t bits = mix64(seed_ ^ mix64(counter_ + i));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  double next() {
    const double u = uniform_at(0);
    ++counter_;
    return u;
  }

  void advance(std::uint64_t n) { counter_ += n; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace fxptrain
