#include "structvar/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace structvar {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_stream_key(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a64(tag)) ^ index);
}

std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return std::mt19937_64(mix_stream_key(seed, tag, index));
}

double uniform01(std::mt19937_64& rng) {
  // (0, 1]: zero would break the log-based samplers below.
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

double sample_exp1(std::mt19937_64& rng) { return -std::log(uniform01(rng)); }

double sample_gamma_half(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return 0.5 * z * z;
}

std::vector<double> sample_dirichlet(std::mt19937_64& rng, double alpha, int k) {
  std::vector<double> g(static_cast<size_t>(k));
  double total = 0.0;
  for (double& x : g) {
    if (alpha == 0.5)
      x = sample_gamma_half(rng);
    else if (alpha == 1.0)
      x = sample_exp1(rng);
    else
      throw std::invalid_argument("sample_dirichlet supports alpha in {0.5, 1.0}");
    total += x;
  }
  if (total <= 0.0) {
    // All-zero draws have probability zero up to rounding; fall back to uniform.
    for (double& x : g) x = 1.0 / k;
    return g;
  }
  for (double& x : g) x /= total;
  return g;
}

}  // namespace structvar
