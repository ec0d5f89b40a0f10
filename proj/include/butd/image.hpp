#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "butd/tensor.hpp"

namespace butd {

// 8-bit grayscale image, row-major.
struct Image {
    int h = 0, w = 0;
    std::vector<uint8_t> px;

    Image() = default;
    Image(int hh, int ww) : h(hh), w(ww), px(static_cast<size_t>(hh) * ww, 0) {}

    uint8_t& at(int y, int x) { return px[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return px[static_cast<size_t>(y) * w + x]; }

    // scaled to [0,1], shape (1,H,W)
    Tensor to_tensor() const;
    uint64_t content_hash() const;
};

// Binary mask with the same addressing as Image.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> m;

    Mask() = default;
    Mask(int hh, int ww) : h(hh), w(ww), m(static_cast<size_t>(hh) * ww, 0) {}

    uint8_t& at(int y, int x) { return m[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return m[static_cast<size_t>(y) * w + x]; }

    int count() const;
    bool empty() const { return count() == 0; }
    void or_with(const Mask& o);
    void subtract(const Mask& o);
    Mask intersect(const Mask& o) const;
    std::pair<float, float> centroid() const; // (x, y), pixel coords
    Tensor to_tensor() const;                 // (1,H,W) of 0/1
    uint64_t content_hash() const;
};

double mask_iou(const Mask& a, const Mask& b);
bool masks_adjacent(const Mask& a, const Mask& b, int gap = 1);

// 3x3 structuring element
Mask erode3(const Mask& m);
Mask dilate3(const Mask& m);
inline Mask open3(const Mask& m) { return dilate3(erode3(m)); }

// 4-connected components, each returned as its own mask
std::vector<Mask> connected_components(const Mask& m);

// run-length encoding, row-major, alternating zero/one run lengths
// starting with a zero run
std::vector<int> rle_encode(const Mask& m);
Mask rle_decode(const std::vector<int>& runs, int h, int w);

// Grayscale PNG io. The writer emits stored (uncompressed) deflate blocks;
// the reader handles exactly that subset, which is all this project writes.
void write_png(const Image& img, const std::string& path);
Image read_png(const std::string& path);

} // namespace butd
