#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace adarec {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive an independent stream seed from a master seed and a purpose tag.
inline uint64_t derive_seed(uint64_t master, uint64_t tag, uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ splitmix64(tag)) + index);
}

// Deterministic RNG. mt19937_64 is fully specified by the standard, and all
// distributions below are hand-rolled, so streams are reproducible across
// platforms and compilers (std::*_distribution are not).
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, two fresh uniforms per draw.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Gumbel(0, 1)
    double gumbel() {
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
        return -std::log(-std::log(u));
    }

    // [0, n)
    int uniform_int(int n) {
        return static_cast<int>(eng_() % static_cast<uint64_t>(n));
    }

    // Fisher-Yates; avoids std::shuffle's implementation-defined behavior.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(eng_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace adarec
