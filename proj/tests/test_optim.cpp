#include "doctest.h"

#include <cmath>

#include "butd/optim.hpp"

using namespace butd;

TEST_CASE("sgd single step: w=1.0, g=0.5, lr=0.1 -> 0.95") {
    ParamStore ps;
    Parameter& p = ps.add("w", Tensor::scalar(1.0f));
    p.grad.v[0] = 0.5f;
    OptimizerConfig cfg;
    cfg.kind = OptKind::sgd_momentum;
    cfg.lr = 0.1f;
    cfg.momentum = 0.0f;
    Optimizer opt(cfg);
    opt.step(ps);
    CHECK(p.value.v[0] == doctest::Approx(0.95f));
    CHECK(p.grad.v[0] == 0.0f); // gradients zeroed after the step
}

TEST_CASE("zero gradient leaves parameters unchanged") {
    ParamStore ps;
    Parameter& p = ps.add("w", Tensor({3}, {1.0f, -2.0f, 0.5f}));
    Optimizer opt(OptimizerConfig{});
    opt.step(ps);
    CHECK(p.value.v == std::vector<float>({1.0f, -2.0f, 0.5f}));
}

TEST_CASE("adam single step matches the hand-computed update") {
    ParamStore ps;
    Parameter& p = ps.add("w", Tensor::scalar(0.7f));
    p.grad.v[0] = 0.3f;
    OptimizerConfig cfg;
    cfg.kind = OptKind::adam;
    cfg.lr = 0.01f;
    Optimizer opt(cfg);
    opt.step(ps);

    // transcription of the update formula, t = 1
    double g = 0.3;
    double m = (1 - 0.9) * g;
    double v = (1 - 0.999) * g * g;
    double mhat = m / (1 - 0.9);
    double vhat = v / (1 - 0.999);
    double want = 0.7 - 0.01 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::fabs(p.value.v[0] - want) <= 1e-7);
}

TEST_CASE("momentum accumulates across steps") {
    ParamStore ps;
    Parameter& p = ps.add("w", Tensor::scalar(0.0f));
    OptimizerConfig cfg;
    cfg.kind = OptKind::sgd_momentum;
    cfg.lr = 1.0f;
    cfg.momentum = 0.5f;
    Optimizer opt(cfg);
    p.grad.v[0] = 1.0f;
    opt.step(ps); // v=1, w=-1
    p.grad.v[0] = 1.0f;
    opt.step(ps); // v=1.5, w=-2.5
    CHECK(p.value.v[0] == doctest::Approx(-2.5f));
}

TEST_CASE("weight decay pulls parameters toward zero") {
    ParamStore ps;
    Parameter& p = ps.add("w", Tensor::scalar(2.0f));
    OptimizerConfig cfg;
    cfg.kind = OptKind::sgd_momentum;
    cfg.lr = 0.1f;
    cfg.momentum = 0.0f;
    cfg.weight_decay = 0.1f;
    Optimizer opt(cfg);
    opt.step(ps); // g = 0 + 0.1*2 = 0.2 -> w = 2 - 0.02
    CHECK(p.value.v[0] == doctest::Approx(1.98f));
}
