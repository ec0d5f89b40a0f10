#include "butd/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>

namespace butd::kern {

namespace {
std::atomic<bool> g_serial{false};
// Small tensors are not worth a parallel region on 2-4 cores; fully
// connected layers in these models never are.
constexpr int64_t kConvParallelMinWork = 16 * 1024;
constexpr int64_t kFcParallelMinWork = 512 * 1024;
} // namespace

void use_serial_kernels(bool on) { g_serial.store(on); }
bool serial_kernels() { return g_serial.load(); }

// The loops below accumulate each output element in exactly the serial
// reference order (ci, then ky, then kx ascending), so results stay
// bit-identical; they only hoist the bounds checks and let the ox loops
// vectorize.

void conv2d_fwd(const float* x, const float* w, const float* b, float* y, const ConvDims& d) {
    if (g_serial.load()) {
        conv2d_fwd_serial(x, w, b, y, d);
        return;
    }
    const int64_t work = static_cast<int64_t>(d.cout) * d.ho * d.wo * d.cin * d.kh * d.kw;
#pragma omp parallel for schedule(static) if (work >= kConvParallelMinWork)
    for (int co = 0; co < d.cout; ++co) {
        const float bias = b ? b[co] : 0.0f;
        for (int oy = 0; oy < d.ho; ++oy) {
            float* yrow = y + (static_cast<int64_t>(co) * d.ho + oy) * d.wo;
            for (int ox = 0; ox < d.wo; ++ox) yrow[ox] = bias;
            const int iy0 = oy * d.stride - d.pad;
            for (int ci = 0; ci < d.cin; ++ci) {
                const float* xc = x + static_cast<int64_t>(ci) * d.h * d.w;
                const float* wc = w + (static_cast<int64_t>(co) * d.cin + ci) * d.kh * d.kw;
                for (int ky = 0; ky < d.kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    const float* xrow = xc + static_cast<int64_t>(iy) * d.w;
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const float wv = wc[ky * d.kw + kx];
                        // valid ox where 0 <= ox*stride - pad + kx < w
                        int ox0 = 0, ox1 = d.wo;
                        while (ox0 < d.wo && ox0 * d.stride - d.pad + kx < 0) ++ox0;
                        while (ox1 > ox0 && (ox1 - 1) * d.stride - d.pad + kx >= d.w) --ox1;
                        const float* xr = xrow - d.pad + kx;
                        if (d.stride == 1) {
                            for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xr[ox];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xr[ox * d.stride];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_bwd_input(const float* gy, const float* w, float* gx, const ConvDims& d) {
    if (g_serial.load()) {
        conv2d_bwd_input_serial(gy, w, gx, d);
        return;
    }
    const int64_t work = static_cast<int64_t>(d.cin) * d.h * d.w * d.cout * d.kh * d.kw;
#pragma omp parallel for schedule(static) if (work >= kConvParallelMinWork)
    for (int ci = 0; ci < d.cin; ++ci) {
        float* gxc = gx + static_cast<int64_t>(ci) * d.h * d.w;
        for (int co = 0; co < d.cout; ++co) {
            const float* gyc = gy + static_cast<int64_t>(co) * d.ho * d.wo;
            const float* wc = w + (static_cast<int64_t>(co) * d.cin + ci) * d.kh * d.kw;
            // oy descends so each input element accumulates in the same
            // ky-ascending order as the serial reference
            for (int oy = d.ho - 1; oy >= 0; --oy) {
                const float* gyrow = gyc + static_cast<int64_t>(oy) * d.wo;
                for (int ky = 0; ky < d.kh; ++ky) {
                    const int iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    float* gxrow = gxc + static_cast<int64_t>(iy) * d.w;
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const float wv = wc[ky * d.kw + kx];
                        int ox0 = 0, ox1 = d.wo;
                        while (ox0 < d.wo && ox0 * d.stride - d.pad + kx < 0) ++ox0;
                        while (ox1 > ox0 && (ox1 - 1) * d.stride - d.pad + kx >= d.w) --ox1;
                        float* gxr = gxrow - d.pad + kx;
                        if (d.stride == 1) {
                            for (int ox = ox0; ox < ox1; ++ox) gxr[ox] += gyrow[ox] * wv;
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox) gxr[ox * d.stride] += gyrow[ox] * wv;
                        }
                    }
                }
            }
        }
    }
}

void conv2d_bwd_weight(const float* gy, const float* x, float* gw, float* gb, const ConvDims& d) {
    if (g_serial.load()) {
        conv2d_bwd_weight_serial(gy, x, gw, gb, d);
        return;
    }
    const int64_t work = static_cast<int64_t>(d.cout) * d.cin * d.kh * d.kw * d.ho * d.wo;
#pragma omp parallel for schedule(static) if (work >= kConvParallelMinWork)
    for (int co = 0; co < d.cout; ++co) {
        const float* gyc = gy + static_cast<int64_t>(co) * d.ho * d.wo;
        for (int ci = 0; ci < d.cin; ++ci) {
            const float* xc = x + static_cast<int64_t>(ci) * d.h * d.w;
            float* wc = gw + (static_cast<int64_t>(co) * d.cin + ci) * d.kh * d.kw;
            for (int ky = 0; ky < d.kh; ++ky) {
                for (int kx = 0; kx < d.kw; ++kx) {
                    float acc = 0.0f;
                    for (int oy = 0; oy < d.ho; ++oy) {
                        const int iy = oy * d.stride - d.pad + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        const float* gyrow = gyc + static_cast<int64_t>(oy) * d.wo;
                        const float* xrow = xc + static_cast<int64_t>(iy) * d.w - d.pad + kx;
                        int ox0 = 0, ox1 = d.wo;
                        while (ox0 < d.wo && ox0 * d.stride - d.pad + kx < 0) ++ox0;
                        while (ox1 > ox0 && (ox1 - 1) * d.stride - d.pad + kx >= d.w) --ox1;
                        if (d.stride == 1) {
                            for (int ox = ox0; ox < ox1; ++ox) acc += gyrow[ox] * xrow[ox];
                        } else {
                            for (int ox = ox0; ox < ox1; ++ox) acc += gyrow[ox] * xrow[ox * d.stride];
                        }
                    }
                    wc[ky * d.kw + kx] += acc;
                }
            }
        }
        if (gb) {
            float acc = 0.0f;
            for (int i = 0; i < d.ho * d.wo; ++i) acc += gyc[i];
            gb[co] += acc;
        }
    }
}

void fc_fwd(const float* x, const float* w, const float* b, float* y, int m, int n) {
    const int64_t work = static_cast<int64_t>(m) * n;
    if (g_serial.load() || work < kFcParallelMinWork) {
        fc_fwd_serial(x, w, b, y, m, n);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        float acc = b ? b[i] : 0.0f;
        const float* wr = w + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += wr[j] * x[j];
        y[i] = acc;
    }
}

void fc_bwd(const float* gy, const float* x, const float* w, float* gx, float* gw, float* gb,
            int m, int n) {
    const int64_t work = static_cast<int64_t>(m) * n;
    if (g_serial.load() || work < kFcParallelMinWork) {
        fc_bwd_serial(gy, x, w, gx, gw, gb, m, n);
        return;
    }
    if (gx) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (int i = 0; i < m; ++i) acc += gy[i] * w[static_cast<int64_t>(i) * n + j];
            gx[j] += acc;
        }
    }
    if (gw) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < m; ++i) {
            float g = gy[i];
            float* wr = gw + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) wr[j] += g * x[j];
        }
    }
    if (gb) {
        for (int i = 0; i < m; ++i) gb[i] += gy[i];
    }
}

} // namespace butd::kern
