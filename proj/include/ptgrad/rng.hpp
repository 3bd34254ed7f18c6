#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ptgrad {

// Mixes (seed, stream) into an independent 64-bit state. splitmix64 output is
// well distributed even for adjacent inputs, so (seed, i) and (seed, i+1)
// give decorrelated streams.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic standard-normal stream: mt19937_64 plus explicit Box-Muller,
// so outputs are identical across standard libraries (std::normal_distribution
// is not pinned by the standard).
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}
  GaussianStream(std::uint64_t seed, std::uint64_t stream)
      : eng_(mix_seed(seed, stream)) {}

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1], u2 in [0,1)
    double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ptgrad
