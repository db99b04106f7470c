#pragma once

#include <cstdint>
#include <vector>

namespace questlab {

// Deterministic splitmix64 stream. Every stochastic choice in the project goes
// through this class so that runs are bit-reproducible across platforms; the
// standard <random> distributions are implementation-defined and unusable here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Bounded draw via 128-bit multiply-shift; bias is < 2^-64 and the mapping
    // is fixed, which is what matters for reproducibility.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

    // Uniform in [0,1) with 53 random bits.
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return unit() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[index(v.size())];
    }

    // Child stream independent of how much of this stream has been consumed.
    Rng derive(std::uint64_t stream) const { return Rng(mix(seed_, stream)); }

    std::uint64_t seed() const { return seed_; }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

}  // namespace questlab
