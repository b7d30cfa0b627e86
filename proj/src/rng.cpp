#include "fasam/rng.hpp"

#include <cmath>

#include "fasam/error.hpp"

namespace fasam {

double RngStream::normal() {
  double u1 = uniform01();
  const double u2 = uniform01();
  if (u1 <= 0.0) u1 = 1.0 / 9007199254740992.0;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

long RngStream::poisson(double rate) {
  if (!(rate > 0.0)) return 0;
  if (rate < 30.0) {
    const double limit = std::exp(-rate);
    long k = 0;
    double prod = uniform01();
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }
  const double n = normal();
  const double v = std::floor(rate + std::sqrt(rate) * n + 0.5);
  return v > 0.0 ? static_cast<long>(v) : 0;
}

int RngStream::uniform_int(int n) {
  if (n < 1) throw InvalidInputError("uniform_int: n must be >= 1");
  int v = static_cast<int>(uniform01() * static_cast<double>(n));
  if (v >= n) v = n - 1;
  return v;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over the xored pair
  std::uint64_t z = seed ^ (index + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace fasam
