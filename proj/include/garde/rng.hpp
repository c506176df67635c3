#pragma once

// Portable seeded randomness.
//
// Engine: std::mt19937_64, whose output sequence is fixed by the standard.
// Distributions are implemented here rather than taken from <random>, whose
// distribution algorithms are implementation-defined:
//   uniform()  = (engine() >> 11) * 2^-53, in [0, 1)
//   normal()   = Marsaglia polar method, second variate cached
//
// Stream splitting: independent substreams are seeded with
//   derive_seed(master, stream) = splitmix64(master ^ splitmix64(stream + 1))
// The engine uses one substream per annealing round (stream = round index)
// and the Monte-Carlo harness uses derive_seed(master, 4 * trial + role).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>

namespace garde {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (spare_) {
      const double z = *spare_;
      spare_.reset();
      return z;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    return u * factor;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace garde
