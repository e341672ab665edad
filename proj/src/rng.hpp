#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace taton {

// Deterministic sampling helpers. std::uniform_real_distribution is allowed to
// differ between standard library implementations, so everything that must be
// reproducible from a seed draws raw bits and maps them to doubles by hand.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}
    // Independent stream for (seed, index) pairs, e.g. one market per index.
    Rng(uint64_t seed, uint64_t stream) : eng_(mix(seed, stream)) {}

    uint64_t bits() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    double exponential() { return -std::log1p(-uniform()); }

    // Flat Dirichlet draw: exponentials normalized to the unit simplex.
    std::vector<double> dirichlet(int n) {
        std::vector<double> x(n);
        double sum = 0.0;
        for (auto& xi : x) {
            xi = exponential();
            sum += xi;
        }
        for (auto& xi : x) xi /= sum;
        return x;
    }

private:
    // splitmix64 applied to both words so that nearby (seed, stream) pairs
    // land far apart in the mt19937_64 seed space.
    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }
    static uint64_t mix(uint64_t a, uint64_t b) {
        return splitmix(splitmix(a) ^ (0x9e3779b97f4a7c15ULL + (b << 1)));
    }

    std::mt19937_64 eng_;
};

}  // namespace taton
