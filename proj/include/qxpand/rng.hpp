#pragma once

#include <cstdint>
#include <vector>

namespace qx {

// Deterministic, platform-independent generator (splitmix64 sequence).
// Identical seeds produce identical draw sequences everywhere, which is
// what ties every "same seed => byte-identical output" guarantee together.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    std::size_t uniform_index(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(next_u64() % n); }

    bool bernoulli(double p) { return next_double() < p; }

    // Fisher-Yates; draw order fixed so shuffles are reproducible
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace qx
