#pragma once

#include <string>
#include <vector>

#include "butd/image.hpp"

namespace butd {

// Per-class bank of grayscale glyph bitmaps.
struct GlyphSet {
    int glyph_h = 0, glyph_w = 0;
    std::vector<std::vector<Image>> by_class;
    std::string source; // mnist | emnist | procedural

    int classes() const { return static_cast<int>(by_class.size()); }
    const Image& pick(int cls, Rng& rng) const {
        const auto& bank = by_class[static_cast<size_t>(cls)];
        return bank[static_cast<size_t>(rng.uniform_int(static_cast<int>(bank.size())))];
    }
};

// IDX container io (the public MNIST/EMNIST byte layout):
// images magic 0x00000803, labels magic 0x00000801, all fields big-endian.
std::vector<Image> load_idx_images(const std::string& path);
std::vector<uint8_t> load_idx_labels(const std::string& path);
void write_idx_images(const std::vector<Image>& images, const std::string& path);
void write_idx_labels(const std::vector<uint8_t>& labels, const std::string& path);

// Groups images by label. Every class in [0, max_label] must be non-empty.
GlyphSet load_idx(const std::string& images_path, const std::string& labels_path,
                  const std::string& source);

// Deterministic stand-in glyph bank when no IDX files are available:
// each class is a smoothed random blob template with per-instance jitter.
GlyphSet procedural_glyphs(int n_classes, int per_class, int size, uint64_t seed);

} // namespace butd
