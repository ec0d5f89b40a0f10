#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "butd/checkpoint.hpp"
#include "butd/rng.hpp"

using namespace butd;

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(77);
    ParamStore ps;
    ps.add("bu.stage2.conv.weight", he_uniform({8, 4, 3, 3}, 36, rng));
    ps.add("lat.td2bu.stage3.w", he_uniform({4, 8, 1, 1}, 8, rng));
    Tensor odd({3});
    odd.v = {0.0f, -0.0f, 1e-38f}; // signed zero and a denormal must survive
    ps.add("head.bias", odd);

    const char* path = "ckpt_roundtrip.bin";
    save_checkpoint(ps, path);

    ParamStore loaded = read_checkpoint(path);
    REQUIRE(loaded.all().size() == ps.all().size());
    for (size_t i = 0; i < ps.all().size(); ++i) {
        CHECK(loaded.all()[i]->name == ps.all()[i]->name);
        CHECK(loaded.all()[i]->value.shape == ps.all()[i]->value.shape);
        CHECK(loaded.all()[i]->value.content_hash() == ps.all()[i]->value.content_hash());
    }
    std::remove(path);
}

TEST_CASE("load into an existing store verifies names and shapes") {
    Rng rng(78);
    ParamStore ps;
    ps.add("a", he_uniform({4}, 4, rng));
    const char* path = "ckpt_verify.bin";
    save_checkpoint(ps, path);

    ParamStore other;
    other.add("a", Tensor({4}));
    load_checkpoint(other, path);
    CHECK(other.get("a").value.content_hash() == ps.get("a").value.content_hash());

    ParamStore wrong_shape;
    wrong_shape.add("a", Tensor({5}));
    CHECK_THROWS_AS(load_checkpoint(wrong_shape, path), error);

    ParamStore missing;
    missing.add("b", Tensor({4}));
    CHECK_THROWS_AS(load_checkpoint(missing, path), error);
    std::remove(path);
}

TEST_CASE("bad magic and truncation are rejected") {
    {
        std::ofstream os("ckpt_bad.bin", std::ios::binary);
        os << "NOTACKPT";
    }
    CHECK_THROWS_AS(read_checkpoint("ckpt_bad.bin"), error);
    {
        std::ofstream os("ckpt_trunc.bin", std::ios::binary);
        os << "CSCKPT01";
        uint32_t count = 3;
        os.write(reinterpret_cast<const char*>(&count), 4);
    }
    CHECK_THROWS_AS(read_checkpoint("ckpt_trunc.bin"), error);
    CHECK_THROWS_AS(read_checkpoint("no_such_file.bin"), error);
    std::remove("ckpt_bad.bin");
    std::remove("ckpt_trunc.bin");
}
