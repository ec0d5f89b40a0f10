#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "butd/common.hpp"
#include "butd/rng.hpp"

namespace butd {

// Dense row-major float tensor. Rank is dynamic; most of the code uses
// rank 1 (vectors) and rank 3 (C,H,W feature maps).
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) { v.assign(numel_of(shape), 0.0f); }
    Tensor(std::vector<int> s, std::vector<float> data) : shape(std::move(s)), v(std::move(data)) {
        check(static_cast<size_t>(numel_of(shape)) == v.size(), "tensor: shape/value length mismatch");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            check(d >= 0, "tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float x) {
        Tensor t(std::move(s));
        for (auto& e : t.v) e = x;
        return t;
    }
    static Tensor scalar(float x) { return Tensor({1}, {x}); }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    float& at(int i) { return v[static_cast<size_t>(i)]; }
    float at(int i) const { return v[static_cast<size_t>(i)]; }
    // rank-3 (C,H,W)
    float& at(int c, int y, int x) { return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x]; }
    float at(int c, int y, int x) const { return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x]; }
    // rank-2 (R,C)
    float& at2(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
    float at2(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

    void fill(float x) {
        for (auto& e : v) e = x;
    }

    bool all_finite() const {
        for (float e : v)
            if (!std::isfinite(e)) return false;
        return true;
    }

    int argmax() const {
        int best = 0;
        for (int i = 1; i < static_cast<int>(v.size()); ++i)
            if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
        return best;
    }

    int argmax_range(int lo, int hi) const {
        int best = lo;
        for (int i = lo + 1; i < hi; ++i)
            if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
        return best;
    }

    uint64_t content_hash() const {
        uint64_t h = 0x2545f4914f6cdd1dULL;
        for (int d : shape) h = hash_combine(h, static_cast<uint64_t>(d));
        for (float e : v) {
            uint32_t bits;
            static_assert(sizeof(bits) == sizeof(e));
            std::memcpy(&bits, &e, sizeof(bits));
            h = hash_combine(h, bits);
        }
        return h;
    }
};

inline Tensor he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    float limit = std::sqrt(6.0f / static_cast<float>(fan_in > 0 ? fan_in : 1));
    for (auto& e : t.v) e = rng.uniform(-limit, limit);
    return t;
}

} // namespace butd
