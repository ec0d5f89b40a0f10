#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

namespace butd {

// splitmix64, used for seed derivation and content hashing
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// pcg32: deterministic across platforms, cheap to fork per sample
class Rng {
public:
    explicit Rng(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t stream = 0xda3e39cb94b95bdbULL) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += mix64(seed);
        next_u32();
    }

    // independent generator for item `index` under a master seed
    static Rng fork(uint64_t master_seed, uint64_t index) {
        return Rng(mix64(master_seed ^ mix64(index)), mix64(index + 0x632be59bd9b4e019ULL));
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    uint64_t next_u64() { return (static_cast<uint64_t>(next_u32()) << 32) | next_u32(); }

    // in [0, 1)
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // in [0, n)
    int uniform_int(int n) {
        // Lemire-style bounded draw without modulo bias
        uint32_t x = next_u32();
        uint64_t m = static_cast<uint64_t>(x) * static_cast<uint64_t>(n);
        uint32_t l = static_cast<uint32_t>(m);
        if (l < static_cast<uint32_t>(n)) {
            uint32_t t = (-static_cast<uint32_t>(n)) % static_cast<uint32_t>(n);
            while (l < t) {
                x = next_u32();
                m = static_cast<uint64_t>(x) * static_cast<uint64_t>(n);
                l = static_cast<uint32_t>(m);
            }
        }
        return static_cast<int>(m >> 32);
    }

    bool coin(float p = 0.5f) { return uniform() < p; }

    template <typename T>
    void shuffle(T& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

} // namespace butd
