#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace structvar {

// Every random draw in the toolkit comes from a named stream derived from
// (seed, tag, index). Streams are mt19937_64 (bit-stable across platforms) and
// the value-level samplers below avoid std::distribution implementations,
// which are not portable across standard libraries.
std::uint64_t mix_stream_key(std::uint64_t seed, std::string_view tag, std::uint64_t index);
std::mt19937_64 rng_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index);

// Uniform on (0, 1], 53-bit resolution.
double uniform01(std::mt19937_64& rng);

// Exp(1) via inverse CDF.
double sample_exp1(std::mt19937_64& rng);

// Gamma(1/2, 1) as Z^2/2 with Z standard normal (Box-Muller).
double sample_gamma_half(std::mt19937_64& rng);

// Dirichlet with symmetric parameter alpha in {0.5, 1.0}.
std::vector<double> sample_dirichlet(std::mt19937_64& rng, double alpha, int k);

}  // namespace structvar
