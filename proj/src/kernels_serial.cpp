#include "butd/kernels.hpp"

namespace butd::kern {

void conv2d_fwd_serial(const float* x, const float* w, const float* b, float* y, const ConvDims& d) {
    for (int co = 0; co < d.cout; ++co) {
        const float bias = b ? b[co] : 0.0f;
        for (int oy = 0; oy < d.ho; ++oy) {
            for (int ox = 0; ox < d.wo; ++ox) {
                float acc = bias;
                const int iy0 = oy * d.stride - d.pad;
                const int ix0 = ox * d.stride - d.pad;
                for (int ci = 0; ci < d.cin; ++ci) {
                    const float* xc = x + static_cast<int64_t>(ci) * d.h * d.w;
                    const float* wc = w + (static_cast<int64_t>(co) * d.cin + ci) * d.kh * d.kw;
                    for (int ky = 0; ky < d.kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= d.h) continue;
                        for (int kx = 0; kx < d.kw; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            acc += xc[iy * d.w + ix] * wc[ky * d.kw + kx];
                        }
                    }
                }
                y[(static_cast<int64_t>(co) * d.ho + oy) * d.wo + ox] = acc;
            }
        }
    }
}

void conv2d_bwd_input_serial(const float* gy, const float* w, float* gx, const ConvDims& d) {
    for (int ci = 0; ci < d.cin; ++ci) {
        for (int iy = 0; iy < d.h; ++iy) {
            for (int ix = 0; ix < d.w; ++ix) {
                float acc = 0.0f;
                for (int co = 0; co < d.cout; ++co) {
                    const float* gyc = gy + static_cast<int64_t>(co) * d.ho * d.wo;
                    const float* wc = w + (static_cast<int64_t>(co) * d.cin + ci) * d.kh * d.kw;
                    for (int ky = 0; ky < d.kh; ++ky) {
                        const int num = iy + d.pad - ky;
                        if (num < 0 || num % d.stride != 0) continue;
                        const int oy = num / d.stride;
                        if (oy >= d.ho) continue;
                        for (int kx = 0; kx < d.kw; ++kx) {
                            const int numx = ix + d.pad - kx;
                            if (numx < 0 || numx % d.stride != 0) continue;
                            const int ox = numx / d.stride;
                            if (ox >= d.wo) continue;
                            acc += gyc[oy * d.wo + ox] * wc[ky * d.kw + kx];
                        }
                    }
                }
                gx[(static_cast<int64_t>(ci) * d.h + iy) * d.w + ix] += acc;
            }
        }
    }
}

void conv2d_bwd_weight_serial(const float* gy, const float* x, float* gw, float* gb, const ConvDims& d) {
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
                        for (int ox = 0; ox < d.wo; ++ox) {
                            const int ix = ox * d.stride - d.pad + kx;
                            if (ix < 0 || ix >= d.w) continue;
                            acc += gyc[oy * d.wo + ox] * xc[iy * d.w + ix];
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

void fc_fwd_serial(const float* x, const float* w, const float* b, float* y, int m, int n) {
    for (int i = 0; i < m; ++i) {
        float acc = b ? b[i] : 0.0f;
        const float* wr = w + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += wr[j] * x[j];
        y[i] = acc;
    }
}

void fc_bwd_serial(const float* gy, const float* x, const float* w, float* gx, float* gw, float* gb,
                   int m, int n) {
    if (gx) {
        for (int j = 0; j < n; ++j) {
            float acc = 0.0f;
            for (int i = 0; i < m; ++i) acc += gy[i] * w[static_cast<int64_t>(i) * n + j];
            gx[j] += acc;
        }
    }
    if (gw) {
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
