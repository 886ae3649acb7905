#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace temposteer {

// Deterministic, splittable PRNG (PCG64-ish via splitmix stepping).
// std::mt19937 + std distributions are avoided: distribution output is
// implementation-defined and would break bit-reproducibility contracts.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller; one value per call, no cached spare (keeps streams splittable).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    float normalf() { return static_cast<float>(normal()); }

    // Independent child stream; label keeps derivations stable across code motion.
    Rng split(std::string_view label) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (char c : label) h = (h ^ std::uint64_t(std::uint8_t(c))) * 0x100000001b3ull;
        return Rng(splitmix(state_ ^ h));
    }

    Rng split(std::uint64_t index) const {
        return Rng(splitmix(state_ ^ (0xd1342543de82ef95ull * (index + 1))));
    }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t state_;
};

}  // namespace temposteer
