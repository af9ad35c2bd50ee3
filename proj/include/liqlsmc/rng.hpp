#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace liqlsmc {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream purposes; distinct tags give unrelated streams from one root seed.
enum class StreamTag : std::uint64_t {
    Exogenous = 0x45584f47ULL,
    Controls = 0x4354524cULL,
};

/// Seed of the stream owned by `index` (a path) under `root`.
/// Depends only on (root, tag, index), so path i draws the same numbers
/// whatever the thread layout.
constexpr std::uint64_t stream_seed(std::uint64_t root, StreamTag tag, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(root ^ static_cast<std::uint64_t>(tag)) + splitmix64(index + 1));
}

/// Small, fast per-path generator (SplitMix64 sequence) meeting UniformRandomBitGenerator.
class PathRng {
public:
    using result_type = std::uint64_t;

    PathRng(std::uint64_t root, StreamTag tag, std::uint64_t index)
        : state_(stream_seed(root, tag, index)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal via Marsaglia's polar method (deterministic, library-independent).
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace liqlsmc
