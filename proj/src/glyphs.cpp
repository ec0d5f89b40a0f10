#include <algorithm>
#include <cmath>

#include "butd/glyphs.hpp"

namespace butd {

namespace {

constexpr int kGrid = 7;

// Coarse binary template that defines the shape of one glyph class.
std::vector<float> class_template(uint64_t seed, int cls) {
    Rng rng = Rng::fork(hash_combine(seed, 0x67791u), static_cast<uint64_t>(cls));
    std::vector<float> t(kGrid * kGrid, 0.0f);
    while (true) {
        int on = 0;
        for (auto& e : t) {
            e = rng.coin(0.45f) ? 1.0f : 0.0f;
            on += e > 0.0f ? 1 : 0;
        }
        // keep some mass near the middle so every glyph is visible
        int center = 0;
        for (int y = 2; y <= 4; ++y)
            for (int x = 2; x <= 4; ++x) center += t[static_cast<size_t>(y) * kGrid + x] > 0 ? 1 : 0;
        if (on >= 16 && on <= 32 && center >= 3) break;
    }
    return t;
}

float bilinear(const std::vector<float>& t, float y, float x) {
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, kGrid - 1);
    const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, kGrid - 1);
    const int y1 = std::min(y0 + 1, kGrid - 1);
    const int x1 = std::min(x0 + 1, kGrid - 1);
    const float fy = std::clamp(y - static_cast<float>(y0), 0.0f, 1.0f);
    const float fx = std::clamp(x - static_cast<float>(x0), 0.0f, 1.0f);
    const float a = t[static_cast<size_t>(y0) * kGrid + x0] * (1 - fx) + t[static_cast<size_t>(y0) * kGrid + x1] * fx;
    const float b = t[static_cast<size_t>(y1) * kGrid + x0] * (1 - fx) + t[static_cast<size_t>(y1) * kGrid + x1] * fx;
    return a * (1 - fy) + b * fy;
}

} // namespace

GlyphSet procedural_glyphs(int n_classes, int per_class, int size, uint64_t seed) {
    check(n_classes > 0 && per_class > 0 && size >= 8, "procedural_glyphs: bad arguments");
    GlyphSet gs;
    gs.source = "procedural";
    gs.glyph_h = gs.glyph_w = size;
    gs.by_class.resize(static_cast<size_t>(n_classes));

    const int max_shift = std::max(1, size / 14);
    for (int cls = 0; cls < n_classes; ++cls) {
        const std::vector<float> tpl = class_template(seed, cls);
        auto& bank = gs.by_class[static_cast<size_t>(cls)];
        bank.reserve(static_cast<size_t>(per_class));
        for (int inst = 0; inst < per_class; ++inst) {
            Rng rng = Rng::fork(hash_combine(seed, 0x91f3u + static_cast<uint64_t>(cls)),
                                static_cast<uint64_t>(inst));
            const float intensity = rng.uniform(0.75f, 1.0f);
            const int dy = rng.uniform_int(2 * max_shift + 1) - max_shift;
            const int dx = rng.uniform_int(2 * max_shift + 1) - max_shift;
            Image img(size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const float sy = (static_cast<float>(y - dy) + 0.5f) / size * kGrid - 0.5f;
                    const float sx = (static_cast<float>(x - dx) + 0.5f) / size * kGrid - 0.5f;
                    float v = bilinear(tpl, sy, sx);
                    v = std::clamp((v - 0.35f) / 0.3f, 0.0f, 1.0f);
                    if (rng.coin(0.015f)) v = 0.0f; // speckle
                    img.at(y, x) = static_cast<uint8_t>(std::lround(v * 255.0f * intensity));
                }
            bank.push_back(std::move(img));
        }
    }
    return gs;
}

} // namespace butd
