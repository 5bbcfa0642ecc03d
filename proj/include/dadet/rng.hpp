#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dadet {

// Counter-based deterministic RNG. Every consumer derives its own stream from
// (seed, purpose tag, index), so results do not depend on call order and
// resumed runs replay identically.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_tag(const std::string& tag) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// xoshiro-style generator seeded via splitmix; self-contained so streams are
// stable across standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : state_) s = (x = splitmix64(x));
    }
    Rng(uint64_t seed, const std::string& tag, uint64_t index = 0)
        : Rng(splitmix64(seed ^ hash_tag(tag)) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1)) {}

    uint64_t next_u64() {
        uint64_t result = rotl(state_[1] * 5, 7) * 9;
        uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    double normal() {
        // Box-Muller; one value per call keeps the stream position simple.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
};

}  // namespace dadet
