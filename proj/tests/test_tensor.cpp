#include "doctest.h"

#include "butd/rng.hpp"
#include "butd/tensor.hpp"

using namespace butd;

TEST_CASE("tensor shape and element access") {
    Tensor t({2, 3, 4});
    CHECK(t.numel() == 24);
    t.at(1, 2, 3) = 5.0f;
    CHECK(t.v[23] == 5.0f);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f}), error);
}

TEST_CASE("argmax and ranges") {
    Tensor t({5}, {0.1f, 0.9f, 0.3f, 2.0f, -1.0f});
    CHECK(t.argmax() == 3);
    CHECK(t.argmax_range(0, 3) == 1);
}

TEST_CASE("rng is deterministic and fork streams are independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u32() == b.next_u32());

    Rng f1 = Rng::fork(7, 0), f2 = Rng::fork(7, 1);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (f1.next_u32() == f2.next_u32()) ++same;
    CHECK(same < 4);
}

TEST_CASE("uniform_int stays in range") {
    Rng r(3);
    for (int i = 0; i < 1000; ++i) {
        int x = r.uniform_int(7);
        CHECK(x >= 0);
        CHECK(x < 7);
    }
}

TEST_CASE("he_uniform is seed-reproducible and bounded") {
    Rng r1(11), r2(11);
    Tensor a = he_uniform({4, 4}, 16, r1);
    Tensor b = he_uniform({4, 4}, 16, r2);
    CHECK(a.content_hash() == b.content_hash());
    float limit = std::sqrt(6.0f / 16.0f);
    for (float e : a.v) {
        CHECK(e >= -limit);
        CHECK(e <= limit);
    }
}
