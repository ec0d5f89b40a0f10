#include "butd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace butd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::ostream& os, uint32_t x) { os.write(reinterpret_cast<const char*>(&x), 4); }

uint32_t get_u32(std::istream& is) {
    uint32_t x = 0;
    is.read(reinterpret_cast<char*>(&x), 4);
    check(static_cast<bool>(is), "checkpoint: truncated file");
    return x;
}

struct Record {
    std::string name;
    Tensor value;
};

std::vector<Record> read_records(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    check(static_cast<bool>(is) && std::memcmp(magic, kMagic, 8) == 0,
          "checkpoint: bad magic in " + path);
    const uint32_t count = get_u32(is);
    std::vector<Record> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        check(static_cast<bool>(is), "checkpoint: truncated name");
        const uint32_t rank = get_u32(is);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get_u32(is));
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(float)));
        check(static_cast<bool>(is), "checkpoint: truncated values for " + name);
        out.push_back({std::move(name), std::move(t)});
    }
    return out;
}

} // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "checkpoint: cannot write " + path);
    os.write(kMagic, 8);
    put_u32(os, static_cast<uint32_t>(params.all().size()));
    for (const auto& p : params.all()) {
        put_u32(os, static_cast<uint32_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        put_u32(os, static_cast<uint32_t>(p->value.rank()));
        for (int d : p->value.shape) put_u32(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(p->value.v.data()),
                 static_cast<std::streamsize>(p->value.v.size() * sizeof(float)));
    }
    check(static_cast<bool>(os), "checkpoint: write failed for " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
    for (auto& rec : read_records(path)) {
        Parameter& p = params.get(rec.name);
        check(p.value.same_shape(rec.value),
              "checkpoint: shape mismatch for parameter " + rec.name);
        p.value = std::move(rec.value);
    }
}

ParamStore read_checkpoint(const std::string& path) {
    ParamStore store;
    for (auto& rec : read_records(path)) store.add(rec.name, std::move(rec.value));
    return store;
}

} // namespace butd
