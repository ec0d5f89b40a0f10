#include <fstream>

#include "butd/common.hpp"
#include "butd/glyphs.hpp"

namespace butd {

namespace {

uint32_t read_be32(std::istream& is, const char* what) {
    uint8_t b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    check(static_cast<bool>(is), std::string("idx: truncated header reading ") + what);
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | b[3];
}

void write_be32(std::ostream& os, uint32_t x) {
    uint8_t b[4] = {static_cast<uint8_t>(x >> 24), static_cast<uint8_t>(x >> 16),
                    static_cast<uint8_t>(x >> 8), static_cast<uint8_t>(x)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

std::vector<Image> load_idx_images(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "idx: cannot open " + path);
    const uint32_t magic = read_be32(is, "magic");
    check(magic == 0x00000803u, strfmt("idx: bad image magic 0x%08x in %s", magic, path.c_str()));
    const uint32_t count = read_be32(is, "count");
    const uint32_t rows = read_be32(is, "rows");
    const uint32_t cols = read_be32(is, "cols");
    std::vector<Image> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Image img(static_cast<int>(rows), static_cast<int>(cols));
        is.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
        check(static_cast<bool>(is), strfmt("idx: truncated image %u of %u in %s", i, count, path.c_str()));
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<uint8_t> load_idx_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "idx: cannot open " + path);
    const uint32_t magic = read_be32(is, "magic");
    check(magic == 0x00000801u, strfmt("idx: bad label magic 0x%08x in %s", magic, path.c_str()));
    const uint32_t count = read_be32(is, "count");
    std::vector<uint8_t> labels(count);
    is.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    check(static_cast<bool>(is), "idx: truncated labels in " + path);
    return labels;
}

void write_idx_images(const std::vector<Image>& images, const std::string& path) {
    check(!images.empty(), "idx: nothing to write");
    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "idx: cannot write " + path);
    write_be32(os, 0x00000803u);
    write_be32(os, static_cast<uint32_t>(images.size()));
    write_be32(os, static_cast<uint32_t>(images[0].h));
    write_be32(os, static_cast<uint32_t>(images[0].w));
    for (const auto& img : images) {
        check(img.h == images[0].h && img.w == images[0].w, "idx: non-uniform image sizes");
        os.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
    }
}

void write_idx_labels(const std::vector<uint8_t>& labels, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "idx: cannot write " + path);
    write_be32(os, 0x00000801u);
    write_be32(os, static_cast<uint32_t>(labels.size()));
    os.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

GlyphSet load_idx(const std::string& images_path, const std::string& labels_path,
                  const std::string& source) {
    auto images = load_idx_images(images_path);
    auto labels = load_idx_labels(labels_path);
    check(images.size() == labels.size(),
          strfmt("idx: %zu images but %zu labels", images.size(), labels.size()));
    int max_label = 0;
    for (uint8_t l : labels) max_label = std::max(max_label, static_cast<int>(l));

    GlyphSet gs;
    gs.source = source;
    gs.glyph_h = images[0].h;
    gs.glyph_w = images[0].w;
    gs.by_class.resize(static_cast<size_t>(max_label) + 1);
    for (size_t i = 0; i < images.size(); ++i)
        gs.by_class[labels[i]].push_back(std::move(images[i]));
    for (int c = 0; c <= max_label; ++c)
        check(!gs.by_class[static_cast<size_t>(c)].empty(), strfmt("idx: class %d is empty", c));
    return gs;
}

} // namespace butd
