#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fedfv {

// 64-bit finalizer used to derive independent seed streams from (seed, tag, ...).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a) { return splitmix64(a); }

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
    return mix_seed(splitmix64(a ^ 0x8e9d5a1c3f7b2e45ULL) ^ splitmix64(b), rest...);
}

// Seed-stream tags, one per consumer of randomness. Keeping the streams apart
// means adding a draw in one place never perturbs another.
enum : std::uint64_t {
    kSeedInit = 1,
    kSeedData = 2,
    kSeedShards = 3,
    kSeedSample = 4,
    kSeedDropout = 5,
    kSeedTrain = 6,
    kSeedOrder = 7,
};

// Deterministic RNG. All distributions are implemented on top of the raw
// mt19937_64 stream because the standard library's distributions are
// implementation-defined and would break bit-reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n); n must be positive
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    // standard normal via Box-Muller; draws two uniforms per sample
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedfv
