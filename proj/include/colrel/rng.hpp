#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace colrel {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded random stream. Uniforms are built from the raw 64-bit output so
/// that sequences do not depend on the standard library's distributions.
class Rng
{
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() { return normal_(engine_); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound)
    {
        std::uniform_int_distribution<std::uint64_t> dist(0, bound - 1);
        return dist(engine_);
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Derives a reproducible stream from a root seed and a path of tags, e.g.
/// (seed, round, client). Distinct paths give statistically independent streams.
inline Rng derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = mix64(seed);
    for (auto tag : path) {
        h = mix64(h ^ mix64(tag + 0x632be59bd9b4e019ULL));
    }
    return Rng(h);
}

// Stream tags used by the simulator.
enum StreamTag : std::uint64_t {
    kTagGradient = 1,
    kTagUplink = 2,
    kTagPairs = 3,
    kTagTopology = 4,
    kTagData = 5,
    kTagModel = 6,
};

} // namespace colrel
