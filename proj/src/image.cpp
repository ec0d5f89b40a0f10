#include "butd/image.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "butd/common.hpp"
#include "butd/rng.hpp"

namespace butd {

Tensor Image::to_tensor() const {
    Tensor t({1, h, w});
    for (size_t i = 0; i < px.size(); ++i) t.v[i] = static_cast<float>(px[i]) / 255.0f;
    return t;
}

uint64_t Image::content_hash() const {
    uint64_t hsh = hash_combine(static_cast<uint64_t>(h), static_cast<uint64_t>(w));
    for (uint8_t p : px) hsh = hash_combine(hsh, p);
    return hsh;
}

int Mask::count() const {
    int n = 0;
    for (uint8_t e : m) n += e ? 1 : 0;
    return n;
}

void Mask::or_with(const Mask& o) {
    check(h == o.h && w == o.w, "mask: size mismatch in or_with");
    for (size_t i = 0; i < m.size(); ++i) m[i] = (m[i] || o.m[i]) ? 1 : 0;
}

void Mask::subtract(const Mask& o) {
    check(h == o.h && w == o.w, "mask: size mismatch in subtract");
    for (size_t i = 0; i < m.size(); ++i)
        if (o.m[i]) m[i] = 0;
}

Mask Mask::intersect(const Mask& o) const {
    check(h == o.h && w == o.w, "mask: size mismatch in intersect");
    Mask out(h, w);
    for (size_t i = 0; i < m.size(); ++i) out.m[i] = (m[i] && o.m[i]) ? 1 : 0;
    return out;
}

std::pair<float, float> Mask::centroid() const {
    double sx = 0, sy = 0;
    int n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (at(y, x)) {
                sx += x;
                sy += y;
                ++n;
            }
    if (n == 0) return {-1.0f, -1.0f};
    return {static_cast<float>(sx / n), static_cast<float>(sy / n)};
}

Tensor Mask::to_tensor() const {
    Tensor t({1, h, w});
    for (size_t i = 0; i < m.size(); ++i) t.v[i] = m[i] ? 1.0f : 0.0f;
    return t;
}

uint64_t Mask::content_hash() const {
    uint64_t hsh = hash_combine(static_cast<uint64_t>(h), static_cast<uint64_t>(w));
    for (uint8_t p : m) hsh = hash_combine(hsh, p);
    return hsh;
}

double mask_iou(const Mask& a, const Mask& b) {
    check(a.h == b.h && a.w == b.w, "mask: size mismatch in iou");
    int inter = 0, uni = 0;
    for (size_t i = 0; i < a.m.size(); ++i) {
        const bool x = a.m[i], y = b.m[i];
        inter += (x && y) ? 1 : 0;
        uni += (x || y) ? 1 : 0;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

bool masks_adjacent(const Mask& a, const Mask& b, int gap) {
    Mask grown = a;
    for (int i = 0; i < gap; ++i) grown = dilate3(grown);
    for (size_t i = 0; i < grown.m.size(); ++i)
        if (grown.m[i] && b.m[i]) return true;
    return false;
}

Mask erode3(const Mask& m) {
    Mask out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            bool keep = true;
            for (int dy = -1; dy <= 1 && keep; ++dy)
                for (int dx = -1; dx <= 1 && keep; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= m.h || xx < 0 || xx >= m.w || !m.at(yy, xx)) keep = false;
                }
            out.at(y, x) = keep ? 1 : 0;
        }
    return out;
}

Mask dilate3(const Mask& m) {
    Mask out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            bool hit = false;
            for (int dy = -1; dy <= 1 && !hit; ++dy)
                for (int dx = -1; dx <= 1 && !hit; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < m.h && xx >= 0 && xx < m.w && m.at(yy, xx)) hit = true;
                }
            out.at(y, x) = hit ? 1 : 0;
        }
    return out;
}

std::vector<Mask> connected_components(const Mask& m) {
    std::vector<Mask> comps;
    std::vector<uint8_t> seen(m.m.size(), 0);
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(m.m.size()); ++start) {
        if (!m.m[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        Mask comp(m.h, m.w);
        stack.clear();
        stack.push_back(start);
        seen[static_cast<size_t>(start)] = 1;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            comp.m[static_cast<size_t>(i)] = 1;
            const int y = i / m.w, x = i % m.w;
            const std::array<std::pair<int, int>, 4> nb{{{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}}};
            for (auto [yy, xx] : nb) {
                if (yy < 0 || yy >= m.h || xx < 0 || xx >= m.w) continue;
                const int j = yy * m.w + xx;
                if (m.m[static_cast<size_t>(j)] && !seen[static_cast<size_t>(j)]) {
                    seen[static_cast<size_t>(j)] = 1;
                    stack.push_back(j);
                }
            }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

std::vector<int> rle_encode(const Mask& m) {
    std::vector<int> runs;
    uint8_t cur = 0;
    int len = 0;
    for (uint8_t e : m.m) {
        const uint8_t b = e ? 1 : 0;
        if (b == cur) {
            ++len;
        } else {
            runs.push_back(len);
            cur = b;
            len = 1;
        }
    }
    runs.push_back(len);
    return runs;
}

Mask rle_decode(const std::vector<int>& runs, int h, int w) {
    Mask m(h, w);
    size_t i = 0;
    uint8_t cur = 0;
    for (int r : runs) {
        check(r >= 0 && i + static_cast<size_t>(r) <= m.m.size(), "rle: runs exceed mask size");
        for (int k = 0; k < r; ++k) m.m[i++] = cur;
        cur = cur ? 0 : 1;
    }
    check(i == m.m.size(), "rle: runs do not cover mask");
    return m;
}

// ---------------- PNG ----------------

namespace {

uint32_t crc32_entry(uint32_t i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    return c;
}

uint32_t crc32(const uint8_t* data, size_t n, uint32_t crc = 0xffffffffu) {
    static uint32_t table[256];
    static bool init = false;
    if (!init) {
        for (uint32_t i = 0; i < 256; ++i) table[i] = crc32_entry(i);
        init = true;
    }
    for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc;
}

uint32_t adler32(const uint8_t* data, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& out, uint32_t x) {
    out.push_back(static_cast<uint8_t>(x >> 24));
    out.push_back(static_cast<uint8_t>(x >> 16));
    out.push_back(static_cast<uint8_t>(x >> 8));
    out.push_back(static_cast<uint8_t>(x));
}

void put_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, crc32(body.data(), body.size()) ^ 0xffffffffu);
}

uint32_t get_be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

} // namespace

void write_png(const Image& img, const std::string& path) {
    check(img.h > 0 && img.w > 0, "png: empty image");
    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.w));
    put_be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(0); // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);

    // raw scanlines, filter byte 0
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.h) * (img.w + 1));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.px.begin() + static_cast<size_t>(y) * img.w,
                   img.px.begin() + static_cast<size_t>(y + 1) * img.w);
    }

    // zlib stream of stored deflate blocks
    std::vector<uint8_t> idat = {0x78, 0x01};
    size_t off = 0;
    while (off < raw.size()) {
        const size_t len = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + len == raw.size();
        idat.push_back(last ? 1 : 0);
        idat.push_back(static_cast<uint8_t>(len & 0xff));
        idat.push_back(static_cast<uint8_t>(len >> 8));
        idat.push_back(static_cast<uint8_t>(~len & 0xff));
        idat.push_back(static_cast<uint8_t>((~len >> 8) & 0xff));
        idat.insert(idat.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
                    raw.begin() + static_cast<std::ptrdiff_t>(off + len));
        off += len;
    }
    put_be32(idat, adler32(raw.data(), raw.size()));
    put_chunk(out, "IDAT", idat);
    put_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary);
    check(static_cast<bool>(os), "png: cannot write " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    check(static_cast<bool>(os), "png: write failed " + path);
}

Image read_png(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(static_cast<bool>(is), "png: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    check(buf.size() > 8 && buf[1] == 'P' && buf[2] == 'N' && buf[3] == 'G', "png: bad signature in " + path);

    size_t pos = 8;
    int w = 0, h = 0;
    std::vector<uint8_t> idat;
    while (pos + 8 <= buf.size()) {
        const uint32_t len = get_be32(&buf[pos]);
        check(pos + 12 + len <= buf.size(), "png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const uint8_t* data = &buf[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(get_be32(data));
            h = static_cast<int>(get_be32(data + 4));
            check(data[8] == 8 && data[9] == 0, "png: only 8-bit grayscale supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    check(w > 0 && h > 0 && idat.size() > 2, "png: missing IHDR/IDAT");

    // inflate, stored blocks only
    std::vector<uint8_t> raw;
    size_t p = 2;
    while (true) {
        check(p + 5 <= idat.size(), "png: truncated deflate block");
        const uint8_t hdr = idat[p];
        check((hdr & 0x06) == 0, "png: compressed deflate not supported by this reader");
        const size_t len = idat[p + 1] | (static_cast<size_t>(idat[p + 2]) << 8);
        p += 5;
        check(p + len <= idat.size(), "png: truncated stored block");
        raw.insert(raw.end(), idat.begin() + static_cast<std::ptrdiff_t>(p),
                   idat.begin() + static_cast<std::ptrdiff_t>(p + len));
        p += len;
        if (hdr & 1) break;
    }
    check(raw.size() == static_cast<size_t>(h) * (w + 1), "png: unexpected raw size");

    Image img(h, w);
    for (int y = 0; y < h; ++y) {
        check(raw[static_cast<size_t>(y) * (w + 1)] == 0, "png: only filter 0 supported");
        std::memcpy(&img.px[static_cast<size_t>(y) * w], &raw[static_cast<size_t>(y) * (w + 1) + 1],
                    static_cast<size_t>(w));
    }
    return img;
}

} // namespace butd
