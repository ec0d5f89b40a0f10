#include "doctest.h"

#include <cmath>

#include "butd/graph.hpp"
#include "butd/rng.hpp"

using namespace butd;

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
    Tensor t(std::move(shape));
    for (auto& e : t.v) e = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    Graph g;
    Rng rng(1);
    Tensor x = rand_tensor({1, 4, 4}, rng);
    int xn = g.input(x);
    int wn = g.input(Tensor({1, 1, 1, 1}, {1.0f}));
    int y = g.conv2d(xn, wn, -1, 1, 0);
    CHECK(g.value(y).shape == x.shape);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(g.value(y).v[i] == x.v[i]);
}

TEST_CASE("conv2d: all-ones 3x3 kernel on all-ones 3x3 input sums to 9") {
    Graph g;
    int xn = g.input(Tensor::full({1, 3, 3}, 1.0f));
    int wn = g.input(Tensor::full({1, 1, 3, 3}, 1.0f));
    int y = g.conv2d(xn, wn, -1, 1, 0);
    CHECK(g.value(y).numel() == 1);
    CHECK(g.value(y).v[0] == doctest::Approx(9.0f));
}

TEST_CASE("conv2d shape errors name the offending dims") {
    Graph g;
    int xn = g.input(Tensor({2, 4, 4}));
    int wn = g.input(Tensor({3, 5, 3, 3}));
    bool threw = false;
    try {
        g.conv2d(xn, wn, -1, 1, 0);
    } catch (const error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("cin=5") != std::string::npos);
    }
    CHECK(threw);
    int big = g.input(Tensor({1, 1, 9, 9}));
    CHECK_THROWS_AS(g.conv2d(xn, big, -1, 1, 0), error);
}

TEST_CASE("fc: identity weight, one-hot selection") {
    Graph g;
    Rng rng(2);
    Tensor x = rand_tensor({4}, rng);
    Tensor eye({4, 4});
    for (int i = 0; i < 4; ++i) eye.at2(i, i) = 1.0f;
    int y = g.fc(g.input(x), g.input(eye), -1);
    for (int i = 0; i < 4; ++i) CHECK(g.value(y).v[i] == doctest::Approx(x.v[i]));

    // one-hot input picks column k of W
    Tensor w = rand_tensor({3, 4}, rng);
    Tensor ek({4});
    ek.v[2] = 1.0f;
    int y2 = g.fc(g.input(ek), g.input(w), -1);
    for (int i = 0; i < 3; ++i) CHECK(g.value(y2).v[i] == doctest::Approx(w.at2(i, 2)));
}

TEST_CASE("elementwise trivial cases") {
    Graph g;
    int r = g.relu(g.input(Tensor({3}, {-1.0f, 0.0f, 2.0f})));
    CHECK(g.value(r).v == std::vector<float>({0.0f, 0.0f, 2.0f}));

    int s = g.sigmoid(g.input(Tensor({1}, {0.0f})));
    CHECK(g.value(s).v[0] == doctest::Approx(0.5f));

    Rng rng(3);
    Tensor a = rand_tensor({2, 3, 3}, rng);
    int m = g.mul(g.input(a), g.input(Tensor::full({2, 3, 3}, 1.0f)));
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(g.value(m).v[i] == a.v[i]);
}

TEST_CASE("upsample2x and maxpool2 invert shapes") {
    Graph g;
    Rng rng(4);
    Tensor x = rand_tensor({2, 4, 6}, rng);
    int up = g.upsample2x(g.input(x));
    CHECK(g.value(up).shape == std::vector<int>({2, 8, 12}));
    int dn = g.maxpool2(up);
    CHECK(g.value(dn).shape == x.shape);
    // nearest-neighbor upsample then 2x2 max returns the original
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(g.value(dn).v[i] == x.v[i]);

    CHECK_THROWS_AS(g.maxpool2(g.input(Tensor({1, 3, 4}))), error);
}

TEST_CASE("cross entropy: perfect-prediction limit and uniform case") {
    Graph g;
    Tensor strong({4});
    strong.v = {30.0f, -30.0f, -30.0f, -30.0f};
    int l0 = g.cross_entropy(g.input(strong), 0);
    CHECK(g.value(l0).v[0] == doctest::Approx(0.0f).epsilon(1e-6));

    Tensor uniform({5});
    int l1 = g.cross_entropy(g.input(uniform), 3);
    CHECK(g.value(l1).v[0] == doctest::Approx(std::log(5.0f)));

    CHECK_THROWS_AS(g.cross_entropy(g.input(Tensor({3})), 3), error);
}

TEST_CASE("cross entropy matches a hand-rolled log-sum-exp oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor logits = rand_tensor({7}, rng, -4.0f, 4.0f);
        int target = rng.uniform_int(7);
        Graph g;
        int l = g.cross_entropy(g.input(logits), target);
        double z = 0.0;
        for (float e : logits.v) z += std::exp(static_cast<double>(e));
        double want = std::log(z) - logits.v[static_cast<size_t>(target)];
        CHECK(std::fabs(g.value(l).v[0] - want) <= 1e-6);
    }
}

TEST_CASE("softmax inside cross entropy normalizes to 1") {
    Rng rng(6);
    Tensor logits = rand_tensor({9}, rng, -3.0f, 3.0f);
    Graph g;
    ParamStore ps;
    Parameter& p = ps.add("logits", logits);
    int l = g.cross_entropy(g.param(p), 0);
    g.backward(l);
    // d(loss)/d(logit_i) = p_i - [i==target]; sum over i must be 0,
    // i.e. the softmax probabilities sum to 1.
    double s = 0.0;
    for (float e : p.grad.v) s += e;
    CHECK(std::fabs(s) <= 1e-6);
    (void)l;
}

TEST_CASE("bce: on-target prediction gives small loss") {
    Graph g;
    Tensor target({3}, {1.0f, 0.0f, 1.0f});
    Tensor logits({3}, {20.0f, -20.0f, 20.0f});
    int l = g.bce_logits(g.input(logits), target);
    CHECK(g.value(l).v[0] <= 1e-6);
    CHECK_THROWS_AS(g.bce_logits(g.input(logits), Tensor({3}, {2.0f, 0.0f, 0.0f})), error);
}

TEST_CASE("backward: sum gives all-ones gradient") {
    ParamStore ps;
    Rng rng(7);
    Parameter& p = ps.add("x", rand_tensor({3, 2, 2}, rng));
    Graph g;
    int l = g.sum_all(g.param(p));
    g.backward(l);
    for (float e : p.grad.v) CHECK(e == 1.0f);
}

TEST_CASE("backward: sigmoid at zero has slope 1/4") {
    ParamStore ps;
    Parameter& p = ps.add("x", Tensor({1}));
    Graph g;
    int l = g.sum_all(g.sigmoid(g.param(p)));
    g.backward(l);
    CHECK(p.grad.v[0] == doctest::Approx(0.25f));
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    int x = g.input(Tensor({3}));
    CHECK_THROWS_AS(g.backward(x), error);
}

TEST_CASE("random 3-layer graph gradients match central differences") {
    Rng rng(8);
    ParamStore ps;
    Parameter& w1 = ps.add("w1", rand_tensor({4, 2, 3, 3}, rng, -0.5f, 0.5f));
    Parameter& b1 = ps.add("b1", rand_tensor({4}, rng, -0.1f, 0.1f));
    Parameter& w2 = ps.add("w2", rand_tensor({6, 4 * 3 * 3}, rng, -0.5f, 0.5f));
    Parameter& w3 = ps.add("w3", rand_tensor({3, 6}, rng, -0.5f, 0.5f));
    // inputs nudged away from relu kinks
    Tensor x = rand_tensor({2, 6, 6}, rng, 0.1f, 1.0f);

    auto build = [&](Graph& g) {
        int c = g.conv2d(g.input(x), g.param(w1), g.param(b1), 2, 1);
        int h = g.relu(c);
        int f = g.fc(g.flatten(h), g.param(w2), -1);
        int o = g.fc(g.relu(f), g.param(w3), -1);
        return g.cross_entropy(o, 1);
    };
    double err = grad_check(ps, build, 1e-3);
    CHECK(err < 1e-3);
}

TEST_CASE("grad_check: pure linear graph is exact to 1e-6") {
    Rng rng(9);
    ParamStore ps;
    Parameter& w = ps.add("w", rand_tensor({5, 8}, rng, -0.5f, 0.5f));
    Tensor x = rand_tensor({8}, rng);
    auto build = [&](Graph& g) { return g.sum_all(g.fc(g.input(x), g.param(w), -1)); };
    CHECK(grad_check(ps, build, 1e-3) < 1e-6);
}

TEST_CASE("grad_check detects a gradient off by a factor of two") {
    // loss = w + relu(-w) evaluated exactly at the kink: the analytic pass
    // reports slope 1 while the true two-sided quotient is 0.5, i.e. the
    // analytic gradient is 2x the numeric one. grad_check must flag it.
    ParamStore ps;
    Parameter& w = ps.add("w", Tensor({3})); // zeros, on the kink
    auto build = [&](Graph& g) {
        int wp = g.param(w);
        int neg = g.scale_add(g.input(Tensor({3})), wp, -1.0f);
        return g.add(g.sum_all(wp), g.sum_all(g.relu(neg)));
    };
    double err = grad_check(ps, build, 1e-3);
    CHECK(err == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("shared parameter accumulates gradient from both use sites") {
    Rng rng(11);
    ParamStore ps;
    Parameter& w = ps.add("shared", rand_tensor({3, 3}, rng, -0.5f, 0.5f));
    Tensor x1 = rand_tensor({3}, rng), x2 = rand_tensor({3}, rng);

    auto run = [&](bool use1, bool use2) {
        ps.zero_grad();
        Graph g;
        std::vector<int> parts;
        if (use1) parts.push_back(g.sum_all(g.fc(g.input(x1), g.param(w), -1)));
        if (use2) parts.push_back(g.sum_all(g.fc(g.input(x2), g.param(w), -1)));
        int loss = parts.size() == 2 ? g.add(parts[0], parts[1]) : parts[0];
        g.backward(loss);
        return w.grad;
    };
    Tensor g1 = run(true, false);
    Tensor g2 = run(false, true);
    Tensor gboth = run(true, true);
    for (int64_t i = 0; i < gboth.numel(); ++i)
        CHECK(gboth.v[i] == doctest::Approx(g1.v[i] + g2.v[i]).epsilon(1e-6));
}

TEST_CASE("same seed and op sequence give bit-identical values") {
    auto run = [] {
        Rng rng(123);
        ParamStore ps;
        Parameter& w = ps.add("w", he_uniform({8, 4, 3, 3}, 4 * 9, rng));
        Tensor x(std::vector<int>{4, 8, 8});
        for (auto& e : x.v) e = rng.uniform();
        Graph g;
        int y = g.relu(g.conv2d(g.input(x), g.param(w), -1, 1, 1));
        int l = g.sum_all(y);
        g.backward(l);
        return hash_combine(g.value(y).content_hash(), w.grad.content_hash());
    };
    CHECK(run() == run());
}

TEST_CASE("property: random small graphs pass grad_check") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        Rng rng(900 + seed);
        ParamStore ps;
        int ch = 1 + rng.uniform_int(3);
        Parameter& w1 = ps.add("w1", rand_tensor({ch + 1, ch, 3, 3}, rng, -0.4f, 0.4f));
        Parameter& w2 = ps.add("w2", rand_tensor({4, (ch + 1) * 4 * 4}, rng, -0.4f, 0.4f));
        Parameter& alpha = ps.add("alpha", Tensor::scalar(rng.uniform(0.5f, 1.5f)));
        Tensor x = rand_tensor({ch, 8, 8}, rng, 0.05f, 1.0f);
        Tensor target({4});
        target.v[static_cast<size_t>(rng.uniform_int(4))] = 1.0f;

        auto build = [&](Graph& g) {
            int c = g.conv2d(g.input(x), g.param(w1), -1, 2, 1);
            int h = g.relu(c);
            int p = g.maxpool2(h);
            int u = g.upsample2x(p);
            int s = g.smul(g.param(alpha), u);
            int f = g.fc(g.flatten(s), g.param(w2), -1);
            return g.cross_entropy_onehot(f, target);
        };
        CHECK(grad_check(ps, build, 1e-3) < 1e-3);
    }
}
