#pragma once

#include <cstdint>
#include <span>

namespace asmf::rng {

// SplitMix64 step. Bijective, cheap, and good enough for Monte Carlo work
// when each stream is keyed independently.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Stateless combine of two 64-bit keys (order sensitive).
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s = h ^ (b + 0x9E3779B97F4A7C15ull);
  return splitmix64(s);
}

// Seed for trial t of a repeated-trial experiment. Trials are substreams of
// the base seed: shuffling trial order cannot change any trial's draw.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index) {
  return mix(base_seed, index);
}

// Counter-based generator for one sample. The draws for sample `index` of
// stream `stream` depend only on (seed, stream, index), never on how many
// samples are requested or on which thread evaluates them.
class SampleStream {
 public:
  SampleStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
      : state_(mix(mix(seed, stream), index)) {}

  // Uniform on [0, 1).
  double next_u01() {
    return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
  }

  // Uniform on [-1, 1).
  double next_uniform_sym() { return 2.0 * next_u01() - 1.0; }

  void fill_uniform_box(std::span<double> out) {
    for (double& x : out) x = next_uniform_sym();
  }

  // Standard normal draws via Box-Muller (pairwise; odd tail discards the
  // second variate). Avoids std::normal_distribution, whose output is
  // implementation-defined.
  void fill_gaussian(std::span<double> out);

 private:
  std::uint64_t state_;
};

}  // namespace asmf::rng
