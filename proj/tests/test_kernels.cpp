#include "doctest.h"

#include <cmath>
#include <vector>

#include "butd/kernels.hpp"
#include "butd/rng.hpp"
#include "butd/tensor.hpp"

using namespace butd;
using namespace butd::kern;

namespace {

// Independent nested-loop convolution oracle, accumulated in double.
// Written against the cross-correlation definition only; shares no code
// with the library kernels.
Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
    const int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
    const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (ww + 2 * pad - kw) / stride + 1;
    Tensor y({cout, ho, wo});
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = b ? b->v[static_cast<size_t>(co)] : 0.0;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            int iy = oy * stride - pad + ky;
                            int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                            acc += static_cast<double>(x.at(ci, iy, ix)) *
                                   w.v[((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw + kx];
                        }
                y.at(co, oy, ox) = static_cast<float>(acc);
            }
    return y;
}

Tensor rand_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& e : t.v) e = rng.uniform(-1.0f, 1.0f);
    return t;
}

ConvDims make_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    ConvDims d{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3), stride, pad, 0, 0};
    d.ho = conv_out(d.h, d.kh, stride, pad);
    d.wo = conv_out(d.w, d.kw, stride, pad);
    return d;
}

} // namespace

TEST_CASE("conv2d forward matches the nested-loop oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 8; ++trial) {
        int stride = 1 + rng.uniform_int(2);
        int pad = rng.uniform_int(2);
        Tensor x = rand_tensor({1 + rng.uniform_int(3), 5 + rng.uniform_int(6), 5 + rng.uniform_int(6)}, rng);
        Tensor w = rand_tensor({1 + rng.uniform_int(3), x.dim(0), 3, 3}, rng);
        Tensor b = rand_tensor({w.dim(0)}, rng);
        Tensor want = conv_oracle(x, w, &b, stride, pad);

        ConvDims d = make_dims(x, w, stride, pad);
        Tensor got({d.cout, d.ho, d.wo});
        conv2d_fwd(x.v.data(), w.v.data(), b.v.data(), got.v.data(), d);
        REQUIRE(got.numel() == want.numel());
        for (int64_t i = 0; i < got.numel(); ++i)
            CHECK(std::fabs(got.v[i] - want.v[i]) <=
                  1e-6 * std::max(1.0f, std::fabs(want.v[i])) * static_cast<float>(d.cin));
    }
}

TEST_CASE("spec case: random 1x5x5 input, 2x1x3x3 kernel vs oracle") {
    Rng rng(55);
    Tensor x = rand_tensor({1, 5, 5}, rng);
    Tensor w = rand_tensor({2, 1, 3, 3}, rng);
    Tensor want = conv_oracle(x, w, nullptr, 1, 0);
    ConvDims d = make_dims(x, w, 1, 0);
    Tensor got({2, 3, 3});
    conv2d_fwd(x.v.data(), w.v.data(), nullptr, got.v.data(), d);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(std::fabs(got.v[i] - want.v[i]) <= 1e-6);
}

TEST_CASE("omp kernels are bit-identical to the serial reference") {
    Rng rng(202);
    // big enough to clear the parallel-dispatch threshold
    Tensor x = rand_tensor({8, 24, 24}, rng);
    Tensor w = rand_tensor({16, 8, 3, 3}, rng);
    Tensor b = rand_tensor({16}, rng);
    ConvDims d = make_dims(x, w, 1, 1);

    Tensor y_omp({d.cout, d.ho, d.wo}), y_ser({d.cout, d.ho, d.wo});
    use_serial_kernels(false);
    conv2d_fwd(x.v.data(), w.v.data(), b.v.data(), y_omp.v.data(), d);
    use_serial_kernels(true);
    conv2d_fwd(x.v.data(), w.v.data(), b.v.data(), y_ser.v.data(), d);
    use_serial_kernels(false);
    CHECK(y_omp.content_hash() == y_ser.content_hash());

    Tensor gy = rand_tensor(y_omp.shape, rng);
    Tensor gx1(x.shape), gx2(x.shape), gw1(w.shape), gw2(w.shape), gb1(b.shape), gb2(b.shape);
    conv2d_bwd_input(gy.v.data(), w.v.data(), gx1.v.data(), d);
    conv2d_bwd_weight(gy.v.data(), x.v.data(), gw1.v.data(), gb1.v.data(), d);
    conv2d_bwd_input_serial(gy.v.data(), w.v.data(), gx2.v.data(), d);
    conv2d_bwd_weight_serial(gy.v.data(), x.v.data(), gw2.v.data(), gb2.v.data(), d);
    CHECK(gx1.content_hash() == gx2.content_hash());
    CHECK(gw1.content_hash() == gw2.content_hash());
    CHECK(gb1.content_hash() == gb2.content_hash());
}

TEST_CASE("fc matches a naive dot-product oracle") {
    Rng rng(303);
    const int m = 37, n = 53;
    Tensor x = rand_tensor({n}, rng);
    Tensor w = rand_tensor({m, n}, rng);
    Tensor b = rand_tensor({m}, rng);
    Tensor y({m});
    fc_fwd(x.v.data(), w.v.data(), b.v.data(), y.v.data(), m, n);
    for (int i = 0; i < m; ++i) {
        double acc = b.v[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j)
            acc += static_cast<double>(w.v[static_cast<size_t>(i) * n + j]) * x.v[static_cast<size_t>(j)];
        // float32 accumulation over n terms, so scale the bound by n
        CHECK(std::fabs(y.v[static_cast<size_t>(i)] - acc) <= 1e-7 * n * std::max(1.0, std::fabs(acc)));
    }
}

TEST_CASE("fc omp equals serial bit-for-bit") {
    Rng rng(404);
    const int m = 256, n = 300;
    Tensor x = rand_tensor({n}, rng), w = rand_tensor({m, n}, rng);
    Tensor y1({m}), y2({m});
    use_serial_kernels(false);
    fc_fwd(x.v.data(), w.v.data(), nullptr, y1.v.data(), m, n);
    use_serial_kernels(true);
    fc_fwd(x.v.data(), w.v.data(), nullptr, y2.v.data(), m, n);
    use_serial_kernels(false);
    CHECK(y1.content_hash() == y2.content_hash());
}
