#pragma once
// Seedable, portable random streams.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard *distributions* are implementation-defined, so the
// uniform / normal / integer draws below are written out explicitly to keep
// results identical across standard libraries.
//
// Stream splitting: Rng::derive(seed, stream) hashes (seed, stream) with
// splitmix64, so worlds, datasets, initializations and perturbations drawn
// from different named streams never overlap.

#include <cstdint>
#include <random>

namespace icr {

namespace stream {
inline constexpr std::uint64_t world = 1;
inline constexpr std::uint64_t dataset = 2;
inline constexpr std::uint64_t embedding = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t perturb = 5;
inline constexpr std::uint64_t eval = 6;
inline constexpr std::uint64_t pretrain = 7;
inline constexpr std::uint64_t test = 8;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    // Independent stream for (seed, stream id, optional index).
    static Rng derive(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t index = 0) {
        return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream_id * 0x100000001B3ULL + index)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log argument.
    double uniform_open() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

    // Uniform integer in [0, bound) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t bound);

    // Standard normal via Box-Muller; caches the second variate.
    double normal();

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace icr
