// Compares the OpenMP kernels against the serial reference on the conv and
// fully-connected shapes the models actually run, and reports speedups.
#include <chrono>
#include <cstdio>
#include <vector>

#include "butd/kernels.hpp"
#include "butd/rng.hpp"
#include "butd/tensor.hpp"

using namespace butd;
using namespace butd::kern;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Tensor rand_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& e : t.v) e = rng.uniform(-1.0f, 1.0f);
    return t;
}

struct Case {
    const char* name;
    int cin, h, w, cout, k, stride, pad;
};

void bench_conv(const Case& c, int reps) {
    Rng rng(7);
    Tensor x = rand_tensor({c.cin, c.h, c.w}, rng);
    Tensor wt = rand_tensor({c.cout, c.cin, c.k, c.k}, rng);
    Tensor b = rand_tensor({c.cout}, rng);
    ConvDims d{c.cin, c.h, c.w, c.cout, c.k, c.k, c.stride, c.pad, 0, 0};
    d.ho = conv_out(d.h, d.kh, d.stride, d.pad);
    d.wo = conv_out(d.w, d.kw, d.stride, d.pad);
    Tensor y({d.cout, d.ho, d.wo});
    Tensor gy = rand_tensor(y.shape, rng);
    Tensor gx(x.shape), gw(wt.shape), gb(b.shape);

    const double flops =
        2.0 * d.cout * d.ho * d.wo * d.cin * d.kh * d.kw * reps;

    auto run = [&](bool serial) {
        use_serial_kernels(serial);
        double t0 = now_s();
        for (int r = 0; r < reps; ++r)
            conv2d_fwd(x.v.data(), wt.v.data(), b.v.data(), y.v.data(), d);
        double fwd = now_s() - t0;
        t0 = now_s();
        for (int r = 0; r < reps; ++r) {
            gx.fill(0.0f);
            gw.fill(0.0f);
            gb.fill(0.0f);
            conv2d_bwd_input(gy.v.data(), wt.v.data(), gx.v.data(), d);
            conv2d_bwd_weight(gy.v.data(), x.v.data(), gw.v.data(), gb.v.data(), d);
        }
        double bwd = now_s() - t0;
        return std::make_pair(fwd, bwd);
    };
    auto [sf, sb] = run(true);
    auto [pf, pb] = run(false);
    use_serial_kernels(false);
    printf("%-18s fwd %7.1f -> %7.1f MFLOP/s (x%.2f)   bwd %7.1f -> %7.1f (x%.2f)\n", c.name,
           flops / sf / 1e6, flops / pf / 1e6, sf / pf, 2.0 * flops / sb / 1e6, 2.0 * flops / pb / 1e6,
           sb / pb);
}

void bench_fc(int m, int n, int reps) {
    Rng rng(9);
    Tensor x = rand_tensor({n}, rng), w = rand_tensor({m, n}, rng), y({m});
    Tensor gy = rand_tensor({m}, rng), gx({n}), gw({m, n});
    const double flops = 2.0 * m * n * reps;
    auto run = [&](bool serial) {
        use_serial_kernels(serial);
        double t0 = now_s();
        for (int r = 0; r < reps; ++r) {
            fc_fwd(x.v.data(), w.v.data(), nullptr, y.v.data(), m, n);
            gx.fill(0.0f);
            gw.fill(0.0f);
            fc_bwd(gy.v.data(), x.v.data(), w.v.data(), gx.v.data(), gw.v.data(), nullptr, m, n);
        }
        return now_s() - t0;
    };
    const double s = run(true), p = run(false);
    use_serial_kernels(false);
    printf("fc %4dx%-5d        %7.1f -> %7.1f MFLOP/s (x%.2f)\n", m, n, 3.0 * flops / s / 1e6,
           3.0 * flops / p / 1e6, s / p);
}

} // namespace

int main() {
    const Case cases[] = {
        {"stem 1->8 64x32", 1, 32, 64, 8, 3, 1, 1},
        {"stage 8->12 /2", 8, 32, 64, 12, 3, 2, 1},
        {"stage 12->16 /2", 12, 16, 32, 16, 3, 2, 1},
        {"persons 6->10", 6, 56, 112, 10, 3, 2, 1},
        {"lenet 12->16 28px", 12, 28, 28, 16, 3, 2, 1},
        {"resnet 64->64", 64, 32, 32, 64, 3, 1, 1},
    };
    printf("kernel benchmark, serial reference -> openmp\n");
    for (const auto& c : cases) bench_conv(c, 50);
    bench_fc(48, 512, 2000);
    bench_fc(512, 48, 2000);
    return 0;
}
