#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace diffsci {

/// splitmix64 finalizer; used to derive independent stream seeds from a run
/// seed and a stream tag (step index, band, ...).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline void fill_gaussian(std::span<double> out, std::uint64_t seed, double stddev = 1.0)
{
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : out) v = stddev * dist(gen);
}

inline void fill_uniform(std::span<double> out, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : out) v = dist(gen);
}

} // namespace diffsci
