#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace facplace {

// Seeded pseudo-random stream. All randomness in the project flows through
// named streams derived from one master seed, so adding a consumer never
// shifts the draws seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (no cached second value).
  double normal();

  // Standard Gumbel draw.
  double gumbel();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream from (master seed, stream name, index).
Rng make_stream(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0);

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view name, std::uint64_t index = 0);

}  // namespace facplace
