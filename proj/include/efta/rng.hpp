#pragma once

#include <cstdint>
#include <random>

namespace efta {

// splitmix64: used to derive independent sub-streams from one seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic RNG. The engine (mt19937_64) is fully specified by the
// standard; the value mappings below avoid std::*_distribution, whose
// algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed), seed_mix_(seed ^ 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased uniform integer in [0, n)
    uint32_t below(uint32_t n) {
        const uint64_t span = 0x100000000ull;
        const uint64_t limit = span - span % n;
        for (;;) {
            const uint64_t x = next_u64() >> 32;
            if (x < limit) return static_cast<uint32_t>(x % n);
        }
    }

    // independent stream for sub-task `index`
    Rng derive(uint64_t index) const {
        uint64_t s = seed_mix_ + 0x632be59bd9b4e019ull * (index + 1);
        const uint64_t a = splitmix64(s);
        return Rng(a);
    }

    void note(uint64_t mix) { seed_mix_ ^= mix; }

private:
    std::mt19937_64 eng_;
    uint64_t seed_mix_;
};

// Canonical per-trial seed derivation used across campaign and tests.
inline uint64_t trial_seed(uint64_t base_seed, uint64_t trial) {
    uint64_t s = base_seed ^ (0xd1b54a32d192ed03ull * (trial + 1));
    return splitmix64(s);
}

}  // namespace efta
