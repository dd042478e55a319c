#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace recap {

// Deterministic RNG plumbing. Every random draw in the toolkit flows from one
// root seed through named substreams, so individual stages can be re-run in
// isolation without disturbing each other.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derive a substream seed from a root seed and a list of name components,
// e.g. substream_seed(seed, {"gap", book_id, std::to_string(central_id)}).
inline uint64_t substream_seed(uint64_t root, std::initializer_list<std::string_view> names) {
    uint64_t h = splitmix64(root);
    for (auto n : names) h = splitmix64(h ^ fnv1a64(n));
    return h;
}

// Small self-contained generator (xoshiro-style splitmix chain). We avoid
// std::uniform_int_distribution because its output is implementation-defined;
// artifact hashes must match across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(splitmix64(seed)) {}

    uint64_t next() {
        state_ = splitmix64(state_);
        return state_;
    }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
    // distribution exact.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(next());  // full 64-bit range
        const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t v = next();
        while (v >= limit) v = next();
        return lo + static_cast<int64_t>(v % span);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; used only for tiny parameter inits.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace recap
