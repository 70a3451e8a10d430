#pragma once

#include "chorchain/bytes.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace chorchain {

/// SplitMix64 step; used to derive independent sub-seeds from one scenario seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded generator with platform-independent derived distributions
/// (the std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double exponential(double mean) { return -mean * std::log1p(-uniform01()); }

    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v;
        do {
            v = next();
        } while (v >= limit);
        return v % n;
    }

    template <std::size_t N>
    FixedBytes<N> fixed()
    {
        FixedBytes<N> out{};
        fill(out.data(), N);
        return out;
    }

    Bytes bytes(std::size_t n)
    {
        Bytes out(n);
        fill(out.data(), n);
        return out;
    }

private:
    void fill(std::uint8_t* dst, std::size_t n)
    {
        for (std::size_t i = 0; i < n; i += 8) {
            std::uint64_t v = next();
            for (std::size_t j = 0; j < 8 && i + j < n; ++j)
                dst[i + j] = static_cast<std::uint8_t>(v >> (8 * j));
        }
    }

    std::mt19937_64 engine_;
};

} // namespace chorchain
