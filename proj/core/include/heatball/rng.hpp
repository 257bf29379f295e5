#pragma once

#include <array>
#include <cstdint>

namespace heatball {

// Stateless counter mixer. Every random decision in the toolkit is a pure
// function of (seed, stream, counter), so any walk or sweep can be replayed
// from a snapshot without storing generator state. The mixer is the
// splitmix64 finalizer applied to a combination of the three words.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t counter_u64(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h = mix64(seed ^ 0x8e9c5f3d2a1b7e4dULL);
    h = mix64(h ^ stream);
    h = mix64(h ^ counter);
    return h;
}

// Uniform double in [0, 1) with 53 random bits.
inline double counter_double(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return static_cast<double>(counter_u64(seed, stream, counter) >> 11) * 0x1.0p-53;
}

// Sequential view over one (seed, stream) counter lane. Cheap to construct;
// never shares state between streams.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    std::uint64_t next_u64() { return counter_u64(seed_, stream_, counter_++); }

    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, bound) by rejection on the top bits.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % bound;
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

// Stream id namespaces, so different subsystems never reuse a lane.
namespace rng_space {
inline constexpr std::uint64_t kWalks = 0;                    // + walk index
inline constexpr std::uint64_t kSweeps = std::uint64_t{1} << 40; // + sweep index
inline constexpr std::uint64_t kScratch = std::uint64_t{1} << 41;
} // namespace rng_space

} // namespace heatball
