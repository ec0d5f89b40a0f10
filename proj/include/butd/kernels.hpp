#pragma once

#include <cstdint>

namespace butd::kern {

// Shape record shared by the conv kernels.
struct ConvDims {
    int cin, h, w;
    int cout, kh, kw;
    int stride, pad;
    int ho, wo;
};

inline int conv_out(int n, int k, int stride, int pad) { return (n + 2 * pad - k) / stride + 1; }

// All backward kernels are written in gather form: each output element is
// accumulated by exactly one thread, in the same order as the serial
// reference, so parallel and serial results are bit-identical.

// ---- serial reference (kept for testing and as documentation) ----
void conv2d_fwd_serial(const float* x, const float* w, const float* b, float* y, const ConvDims& d);
void conv2d_bwd_input_serial(const float* gy, const float* w, float* gx, const ConvDims& d);
void conv2d_bwd_weight_serial(const float* gy, const float* x, float* gw, float* gb, const ConvDims& d);
void fc_fwd_serial(const float* x, const float* w, const float* b, float* y, int m, int n);
void fc_bwd_serial(const float* gy, const float* x, const float* w, float* gx, float* gw, float* gb,
                   int m, int n);

// ---- OpenMP kernels (the ones the graph executes) ----
void conv2d_fwd(const float* x, const float* w, const float* b, float* y, const ConvDims& d);
void conv2d_bwd_input(const float* gy, const float* w, float* gx, const ConvDims& d);
void conv2d_bwd_weight(const float* gy, const float* x, float* gw, float* gb, const ConvDims& d);
void fc_fwd(const float* x, const float* w, const float* b, float* y, int m, int n);
void fc_bwd(const float* gy, const float* x, const float* w, float* gx, float* gw, float* gb,
            int m, int n);

// Force the graph onto the serial reference kernels (used by tests/bench).
void use_serial_kernels(bool on);
bool serial_kernels();

} // namespace butd::kern
