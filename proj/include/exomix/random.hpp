#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace exomix {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based random stream keyed by (seed, stream id).
///
/// Every draw is a pure function of (seed, stream, position), so work split
/// across threads or rows reproduces bit for bit regardless of scheduling.
/// Distributions are implemented here rather than with <random> so that the
/// output does not depend on the standard library vendor.
class KeyedStream {
public:
    KeyedStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : state_(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)))
    {}

    std::uint64_t next_u64() noexcept
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on [0, 1) on the dyadic grid k * 2^-32. Sums and small dyadic
    /// multiples of these values are exact in double precision.
    double uniform_dyadic32() noexcept { return static_cast<double>(next_u64() >> 32) * 0x1.0p-32; }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept
    {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via Box-Muller (one value per call, second discarded).
    double normal() noexcept
    {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double exponential() noexcept { return -std::log(1.0 - uniform()); }

private:
    std::uint64_t state_;
};

/// Derive a child seed, e.g. the seed of bootstrap replicate `index`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 0x8bb84b93962eacc9ULL));
}

} // namespace exomix
