#include "butd/graph.hpp"

#include <algorithm>
#include <cmath>

namespace butd {

Parameter& ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    check(index_.find(name) == index_.end(), "duplicate parameter: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->grad = Tensor(init.shape);
    p->value = std::move(init);
    p->trainable = trainable;
    p->index = static_cast<int>(params_.size());
    index_[name] = p->index;
    params_.push_back(std::move(p));
    return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter: " + name);
    return *params_[static_cast<size_t>(it->second)];
}

const Parameter& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "unknown parameter: " + name);
    return *params_[static_cast<size_t>(it->second)];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0f);
}

int64_t ParamStore::total_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

int Graph::push(Node n) {
    compute(n);
    if (check_finite_ && !n.val.all_finite())
        fail(strfmt("non-finite value at node %d (op %d)", static_cast<int>(nodes_.size()),
                    static_cast<int>(n.op)));
    for (int i : n.in)
        if (i >= 0 && nodes_[static_cast<size_t>(i)].needs_grad) n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Tensor t) {
    Node n;
    n.op = Op::input;
    n.val = std::move(t);
    return push(std::move(n));
}

int Graph::param(Parameter& p) {
    Node n;
    n.op = Op::param;
    n.prm = &p;
    n.val = p.value;
    n.needs_grad = p.trainable;
    return push(std::move(n));
}

int Graph::conv2d(int x, int w, int b, int stride, int pad) {
    Node n;
    n.op = Op::conv2d;
    n.in = {x, w, b};
    n.stride = stride;
    n.pad = pad;
    return push(std::move(n));
}

int Graph::fc(int x, int w, int b) {
    Node n;
    n.op = Op::fc;
    n.in = {x, w, b};
    return push(std::move(n));
}

int Graph::relu(int x) {
    Node n;
    n.op = Op::relu;
    n.in = {x};
    return push(std::move(n));
}

int Graph::sigmoid(int x) {
    Node n;
    n.op = Op::sigmoid;
    n.in = {x};
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    Node n;
    n.op = Op::add;
    n.in = {a, b};
    return push(std::move(n));
}

int Graph::mul(int a, int b) {
    Node n;
    n.op = Op::mul;
    n.in = {a, b};
    return push(std::move(n));
}

int Graph::smul(int scalar, int x) {
    Node n;
    n.op = Op::smul;
    n.in = {scalar, x};
    return push(std::move(n));
}

int Graph::scale_add(int a, int b, float alpha) {
    Node n;
    n.op = Op::scale_add;
    n.in = {a, b};
    n.calpha = alpha;
    return push(std::move(n));
}

int Graph::upsample2x(int x) {
    Node n;
    n.op = Op::upsample2x;
    n.in = {x};
    return push(std::move(n));
}

int Graph::maxpool2(int x) {
    Node n;
    n.op = Op::maxpool2;
    n.in = {x};
    return push(std::move(n));
}

int Graph::concat0(const std::vector<int>& xs) {
    check(!xs.empty(), "concat0: empty input list");
    Node n;
    n.op = Op::concat0;
    n.in = xs;
    return push(std::move(n));
}

int Graph::slice0(int x, int offset, int len) {
    const Tensor& t = value(x);
    check(offset >= 0 && len > 0 && offset + len <= t.dim(0), "slice0: range out of bounds");
    Node n;
    n.op = Op::slice0;
    n.in = {x};
    n.stride = offset; // attr slots reused
    n.pad = len;
    return push(std::move(n));
}

int Graph::broadcast_hw(int x, int h, int w) {
    Node n;
    n.op = Op::broadcast_hw;
    n.in = {x};
    n.stride = h; // reuse attr slots for the target dims
    n.pad = w;
    return push(std::move(n));
}

int Graph::gap(int x) {
    Node n;
    n.op = Op::gap;
    n.in = {x};
    return push(std::move(n));
}

int Graph::flatten(int x) {
    Node n;
    n.op = Op::flatten;
    n.in = {x};
    return push(std::move(n));
}

int Graph::reshape(int x, std::vector<int> shape) {
    check(Tensor::numel_of(shape) == value(x).numel(), "reshape: element count mismatch");
    Node n;
    n.op = Op::reshape;
    n.in = {x};
    n.aux = Tensor(std::move(shape)); // carries only the target shape
    return push(std::move(n));
}

int Graph::sum_all(int x) {
    Node n;
    n.op = Op::sum_all;
    n.in = {x};
    return push(std::move(n));
}

int Graph::cross_entropy(int logits, int target_class) {
    const Tensor& lg = value(logits);
    check(target_class >= 0 && target_class < static_cast<int>(lg.numel()),
          strfmt("cross_entropy: target %d out of range [0,%d)", target_class,
                 static_cast<int>(lg.numel())));
    Node n;
    n.op = Op::cross_entropy;
    n.in = {logits};
    n.target_index = target_class;
    return push(std::move(n));
}

int Graph::cross_entropy_onehot(int logits, Tensor onehot) {
    check(value(logits).same_shape(onehot), "cross_entropy: one-hot shape mismatch");
    Node n;
    n.op = Op::cross_entropy;
    n.in = {logits};
    n.aux = std::move(onehot);
    return push(std::move(n));
}

int Graph::bce_logits(int logits, Tensor target) {
    check(value(logits).same_shape(target), "bce: target shape mismatch");
    for (float t : target.v)
        check(t >= 0.0f && t <= 1.0f, "bce: target outside [0,1]");
    Node n;
    n.op = Op::bce_logits;
    n.in = {logits};
    n.aux = std::move(target);
    return push(std::move(n));
}

int Graph::pixel_bce_logits(int logits, Tensor target) {
    check(value(logits).same_shape(target), "per-pixel bce: mask shape mismatch");
    Node n;
    n.op = Op::pixel_bce_logits;
    n.in = {logits};
    n.aux = std::move(target);
    return push(std::move(n));
}

int Graph::mse(int pred, Tensor target) {
    check(value(pred).same_shape(target), "mse: target shape mismatch");
    Node n;
    n.op = Op::mse;
    n.in = {pred};
    n.aux = std::move(target);
    return push(std::move(n));
}

namespace {

float stable_bce(float logit, float t) {
    // max(x,0) - x*t + log1p(exp(-|x|))
    return std::max(logit, 0.0f) - logit * t + std::log1p(std::exp(-std::fabs(logit)));
}

} // namespace

void Graph::compute(Node& n) {
    auto V = [&](int i) -> const Tensor& { return nodes_[static_cast<size_t>(i)].val; };
    switch (n.op) {
    case Op::input:
    case Op::param:
        break;
    case Op::conv2d: {
        const Tensor& x = V(n.in[0]);
        const Tensor& w = V(n.in[1]);
        check(x.rank() == 3, "conv2d: input must be (C,H,W)");
        check(w.rank() == 4, "conv2d: kernel must be (Cout,Cin,kH,kW)");
        check(w.dim(1) == x.dim(0),
              strfmt("conv2d: kernel cin=%d does not match input channels=%d", w.dim(1), x.dim(0)));
        check(n.stride >= 1, "conv2d: stride must be >= 1");
        kern::ConvDims d{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3),
                         n.stride,  n.pad,    0,        0};
        check(d.kh <= d.h + 2 * d.pad && d.kw <= d.w + 2 * d.pad,
              strfmt("conv2d: kernel %dx%d larger than padded input %dx%d", d.kh, d.kw,
                     d.h + 2 * d.pad, d.w + 2 * d.pad));
        d.ho = kern::conv_out(d.h, d.kh, d.stride, d.pad);
        d.wo = kern::conv_out(d.w, d.kw, d.stride, d.pad);
        const float* b = nullptr;
        if (n.in[2] >= 0) {
            const Tensor& bt = V(n.in[2]);
            check(bt.numel() == d.cout, "conv2d: bias length mismatch");
            b = bt.v.data();
        }
        n.val = Tensor({d.cout, d.ho, d.wo});
        kern::conv2d_fwd(x.v.data(), w.v.data(), b, n.val.v.data(), d);
        break;
    }
    case Op::fc: {
        const Tensor& x = V(n.in[0]);
        const Tensor& w = V(n.in[1]);
        check(w.rank() == 2, "fc: weight must be (M,N)");
        check(w.dim(1) == static_cast<int>(x.numel()),
              strfmt("fc: weight inner dim %d does not match input length %d", w.dim(1),
                     static_cast<int>(x.numel())));
        const float* b = nullptr;
        if (n.in[2] >= 0) {
            const Tensor& bt = V(n.in[2]);
            check(bt.numel() == w.dim(0), "fc: bias length mismatch");
            b = bt.v.data();
        }
        n.val = Tensor({w.dim(0)});
        kern::fc_fwd(x.v.data(), w.v.data(), b, n.val.v.data(), w.dim(0), w.dim(1));
        break;
    }
    case Op::relu: {
        n.val = V(n.in[0]);
        for (auto& e : n.val.v) e = e > 0.0f ? e : 0.0f;
        break;
    }
    case Op::sigmoid: {
        n.val = V(n.in[0]);
        for (auto& e : n.val.v) e = 1.0f / (1.0f + std::exp(-e));
        break;
    }
    case Op::add: {
        const Tensor& a = V(n.in[0]);
        const Tensor& b = V(n.in[1]);
        check(a.same_shape(b), "add: shape mismatch");
        n.val = a;
        for (int64_t i = 0; i < n.val.numel(); ++i) n.val.v[static_cast<size_t>(i)] += b.v[static_cast<size_t>(i)];
        break;
    }
    case Op::mul: {
        const Tensor& a = V(n.in[0]);
        const Tensor& b = V(n.in[1]);
        check(a.same_shape(b), "mul: shape mismatch");
        n.val = a;
        for (int64_t i = 0; i < n.val.numel(); ++i) n.val.v[static_cast<size_t>(i)] *= b.v[static_cast<size_t>(i)];
        break;
    }
    case Op::smul: {
        const Tensor& s = V(n.in[0]);
        const Tensor& x = V(n.in[1]);
        check(s.numel() == 1, "smul: scalar operand must have one element");
        n.val = x;
        for (auto& e : n.val.v) e *= s.v[0];
        break;
    }
    case Op::scale_add: {
        const Tensor& a = V(n.in[0]);
        const Tensor& b = V(n.in[1]);
        check(a.same_shape(b), "scale_add: shape mismatch");
        n.val = a;
        for (int64_t i = 0; i < n.val.numel(); ++i)
            n.val.v[static_cast<size_t>(i)] += n.calpha * b.v[static_cast<size_t>(i)];
        break;
    }
    case Op::upsample2x: {
        const Tensor& x = V(n.in[0]);
        check(x.rank() == 3, "upsample2x: input must be (C,H,W)");
        n.val = Tensor({x.dim(0), x.dim(1) * 2, x.dim(2) * 2});
        for (int c = 0; c < x.dim(0); ++c)
            for (int y = 0; y < n.val.dim(1); ++y)
                for (int xx = 0; xx < n.val.dim(2); ++xx)
                    n.val.at(c, y, xx) = x.at(c, y / 2, xx / 2);
        break;
    }
    case Op::maxpool2: {
        const Tensor& x = V(n.in[0]);
        check(x.rank() == 3, "maxpool2: input must be (C,H,W)");
        check(x.dim(1) % 2 == 0 && x.dim(2) % 2 == 0,
              strfmt("maxpool2: odd spatial dims %dx%d", x.dim(1), x.dim(2)));
        n.val = Tensor({x.dim(0), x.dim(1) / 2, x.dim(2) / 2});
        n.argsel.assign(static_cast<size_t>(n.val.numel()), 0);
        int64_t o = 0;
        for (int c = 0; c < x.dim(0); ++c)
            for (int y = 0; y < n.val.dim(1); ++y)
                for (int xx = 0; xx < n.val.dim(2); ++xx, ++o) {
                    float best = x.at(c, 2 * y, 2 * xx);
                    uint8_t sel = 0;
                    for (uint8_t k = 1; k < 4; ++k) {
                        float cand = x.at(c, 2 * y + (k >> 1), 2 * xx + (k & 1));
                        if (cand > best) {
                            best = cand;
                            sel = k;
                        }
                    }
                    n.val.v[static_cast<size_t>(o)] = best;
                    n.argsel[static_cast<size_t>(o)] = sel;
                }
        break;
    }
    case Op::concat0: {
        std::vector<int> shape = V(n.in[0]).shape;
        int64_t total = 0;
        for (int i : n.in) {
            const Tensor& t = V(i);
            check(t.rank() == static_cast<int>(shape.size()), "concat0: rank mismatch");
            for (size_t k = 1; k < shape.size(); ++k)
                check(t.shape[k] == shape[k], "concat0: trailing dims mismatch");
            total += t.dim(0);
        }
        shape[0] = static_cast<int>(total);
        n.val = Tensor(shape);
        int64_t off = 0;
        for (int i : n.in) {
            const Tensor& t = V(i);
            std::copy(t.v.begin(), t.v.end(), n.val.v.begin() + off);
            off += t.numel();
        }
        break;
    }
    case Op::slice0: {
        const Tensor& x = V(n.in[0]);
        std::vector<int> shape = x.shape;
        int64_t inner = 1;
        for (size_t k = 1; k < shape.size(); ++k) inner *= shape[k];
        shape[0] = n.pad;
        n.val = Tensor(shape);
        std::copy(x.v.begin() + n.stride * inner, x.v.begin() + (n.stride + n.pad) * inner, n.val.v.begin());
        break;
    }
    case Op::broadcast_hw: {
        const Tensor& x = V(n.in[0]);
        check(x.rank() == 1, "broadcast_hw: input must be a vector");
        int h = n.stride, w = n.pad;
        n.val = Tensor({x.dim(0), h, w});
        for (int c = 0; c < x.dim(0); ++c)
            for (int i = 0; i < h * w; ++i)
                n.val.v[static_cast<size_t>(c) * h * w + i] = x.v[static_cast<size_t>(c)];
        break;
    }
    case Op::gap: {
        const Tensor& x = V(n.in[0]);
        check(x.rank() == 3, "gap: input must be (C,H,W)");
        n.val = Tensor({x.dim(0)});
        const int hw = x.dim(1) * x.dim(2);
        for (int c = 0; c < x.dim(0); ++c) {
            float acc = 0.0f;
            for (int i = 0; i < hw; ++i) acc += x.v[static_cast<size_t>(c) * hw + i];
            n.val.v[static_cast<size_t>(c)] = acc / static_cast<float>(hw);
        }
        break;
    }
    case Op::flatten: {
        const Tensor& x = V(n.in[0]);
        n.val = Tensor({static_cast<int>(x.numel())}, x.v);
        break;
    }
    case Op::reshape: {
        const Tensor& x = V(n.in[0]);
        n.val = Tensor(n.aux.shape, x.v);
        break;
    }
    case Op::sum_all: {
        const Tensor& x = V(n.in[0]);
        float acc = 0.0f;
        for (float e : x.v) acc += e;
        n.val = Tensor::scalar(acc);
        break;
    }
    case Op::cross_entropy: {
        const Tensor& lg = V(n.in[0]);
        float mx = lg.v[0];
        for (float e : lg.v) mx = std::max(mx, e);
        double z = 0.0;
        for (float e : lg.v) z += std::exp(static_cast<double>(e - mx));
        const double logz = std::log(z) + mx;
        n.cache.resize(lg.v.size());
        for (size_t i = 0; i < lg.v.size(); ++i)
            n.cache[i] = static_cast<float>(std::exp(static_cast<double>(lg.v[i]) - logz));
        double loss = 0.0;
        if (n.target_index >= 0) {
            loss = logz - lg.v[static_cast<size_t>(n.target_index)];
        } else {
            for (size_t i = 0; i < lg.v.size(); ++i)
                loss += static_cast<double>(n.aux.v[i]) * (logz - lg.v[i]);
        }
        n.val = Tensor::scalar(static_cast<float>(loss));
        break;
    }
    case Op::bce_logits:
    case Op::pixel_bce_logits: {
        const Tensor& lg = V(n.in[0]);
        double acc = 0.0;
        for (size_t i = 0; i < lg.v.size(); ++i) acc += stable_bce(lg.v[i], n.aux.v[i]);
        n.val = Tensor::scalar(static_cast<float>(acc / static_cast<double>(lg.numel())));
        break;
    }
    case Op::mse: {
        const Tensor& x = V(n.in[0]);
        double acc = 0.0;
        for (size_t i = 0; i < x.v.size(); ++i) {
            double d = static_cast<double>(x.v[i]) - n.aux.v[i];
            acc += d * d;
        }
        n.val = Tensor::scalar(static_cast<float>(acc / static_cast<double>(x.numel())));
        break;
    }
    }
}

Tensor& Graph::grad_buf(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor(n.val.shape);
    return n.grad;
}

void Graph::backward(int loss_node, GradSink* sink) {
    Node& loss = nodes_[static_cast<size_t>(loss_node)];
    check(loss.val.numel() == 1, "backward: loss node is not scalar");
    check(loss.val.all_finite(), "backward: loss is not finite");
    grad_buf(loss_node).v[0] = 1.0f;
    for (int id = loss_node; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad || n.grad.numel() == 0) continue;
        if (!n.grad.all_finite()) fail(strfmt("backward: non-finite gradient at node %d", id));
        backprop(n);
        if (n.op == Op::param && n.prm->trainable) {
            Tensor* dst = &n.prm->grad;
            if (sink) {
                check(n.prm->index >= 0 && n.prm->index < static_cast<int>(sink->size()),
                      "backward: sink does not cover parameter " + n.prm->name);
                Tensor& slot = (*sink)[static_cast<size_t>(n.prm->index)];
                if (slot.numel() == 0) slot = Tensor(n.prm->value.shape);
                dst = &slot;
            }
            for (int64_t i = 0; i < n.grad.numel(); ++i)
                dst->v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)];
        }
    }
}

void Graph::backprop(Node& n) {
    auto V = [&](int i) -> const Tensor& { return nodes_[static_cast<size_t>(i)].val; };
    auto G = [&](int i) -> Tensor& { return grad_buf(i); };
    auto wants = [&](int i) { return i >= 0 && nodes_[static_cast<size_t>(i)].needs_grad; };

    switch (n.op) {
    case Op::input:
    case Op::param:
        break;
    case Op::conv2d: {
        const Tensor& x = V(n.in[0]);
        const Tensor& w = V(n.in[1]);
        kern::ConvDims d{x.dim(0),  x.dim(1), x.dim(2),     w.dim(0),     w.dim(2), w.dim(3),
                         n.stride,  n.pad,    n.val.dim(1), n.val.dim(2)};
        if (wants(n.in[0]))
            kern::conv2d_bwd_input(n.grad.v.data(), w.v.data(), G(n.in[0]).v.data(), d);
        if (wants(n.in[1]) || (n.in[2] >= 0 && wants(n.in[2]))) {
            float* gw = wants(n.in[1]) ? G(n.in[1]).v.data() : nullptr;
            float* gb = (n.in[2] >= 0 && wants(n.in[2])) ? G(n.in[2]).v.data() : nullptr;
            if (gw == nullptr) {
                // bias-only path still needs the weight pass for gb
                Tensor scratch(w.shape);
                kern::conv2d_bwd_weight(n.grad.v.data(), x.v.data(), scratch.v.data(), gb, d);
            } else {
                kern::conv2d_bwd_weight(n.grad.v.data(), x.v.data(), gw, gb, d);
            }
        }
        break;
    }
    case Op::fc: {
        const Tensor& x = V(n.in[0]);
        const Tensor& w = V(n.in[1]);
        float* gx = wants(n.in[0]) ? G(n.in[0]).v.data() : nullptr;
        float* gw = wants(n.in[1]) ? G(n.in[1]).v.data() : nullptr;
        float* gb = (n.in[2] >= 0 && wants(n.in[2])) ? G(n.in[2]).v.data() : nullptr;
        kern::fc_bwd(n.grad.v.data(), x.v.data(), w.v.data(), gx, gw, gb, w.dim(0), w.dim(1));
        break;
    }
    case Op::relu: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const Tensor& x = V(n.in[0]);
        for (int64_t i = 0; i < gx.numel(); ++i)
            if (x.v[static_cast<size_t>(i)] > 0.0f) gx.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)];
        break;
    }
    case Op::sigmoid: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        for (int64_t i = 0; i < gx.numel(); ++i) {
            float s = n.val.v[static_cast<size_t>(i)];
            gx.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)] * s * (1.0f - s);
        }
        break;
    }
    case Op::add: {
        for (int k = 0; k < 2; ++k) {
            if (!wants(n.in[static_cast<size_t>(k)])) continue;
            Tensor& g = G(n.in[static_cast<size_t>(k)]);
            for (int64_t i = 0; i < g.numel(); ++i) g.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)];
        }
        break;
    }
    case Op::mul: {
        for (int k = 0; k < 2; ++k) {
            if (!wants(n.in[static_cast<size_t>(k)])) continue;
            Tensor& g = G(n.in[static_cast<size_t>(k)]);
            const Tensor& other = V(n.in[static_cast<size_t>(1 - k)]);
            for (int64_t i = 0; i < g.numel(); ++i)
                g.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)] * other.v[static_cast<size_t>(i)];
        }
        break;
    }
    case Op::smul: {
        const Tensor& s = V(n.in[0]);
        const Tensor& x = V(n.in[1]);
        if (wants(n.in[0])) {
            double acc = 0.0;
            for (int64_t i = 0; i < x.numel(); ++i)
                acc += static_cast<double>(n.grad.v[static_cast<size_t>(i)]) * x.v[static_cast<size_t>(i)];
            G(n.in[0]).v[0] += static_cast<float>(acc);
        }
        if (wants(n.in[1])) {
            Tensor& g = G(n.in[1]);
            for (int64_t i = 0; i < g.numel(); ++i)
                g.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)] * s.v[0];
        }
        break;
    }
    case Op::scale_add: {
        if (wants(n.in[0])) {
            Tensor& g = G(n.in[0]);
            for (int64_t i = 0; i < g.numel(); ++i) g.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)];
        }
        if (wants(n.in[1])) {
            Tensor& g = G(n.in[1]);
            for (int64_t i = 0; i < g.numel(); ++i)
                g.v[static_cast<size_t>(i)] += n.calpha * n.grad.v[static_cast<size_t>(i)];
        }
        break;
    }
    case Op::upsample2x: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const Tensor& x = V(n.in[0]);
        for (int c = 0; c < x.dim(0); ++c)
            for (int y = 0; y < n.val.dim(1); ++y)
                for (int xx = 0; xx < n.val.dim(2); ++xx)
                    gx.at(c, y / 2, xx / 2) += n.grad.at(c, y, xx);
        break;
    }
    case Op::maxpool2: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        int64_t o = 0;
        for (int c = 0; c < n.val.dim(0); ++c)
            for (int y = 0; y < n.val.dim(1); ++y)
                for (int xx = 0; xx < n.val.dim(2); ++xx, ++o) {
                    uint8_t sel = n.argsel[static_cast<size_t>(o)];
                    gx.at(c, 2 * y + (sel >> 1), 2 * xx + (sel & 1)) += n.grad.v[static_cast<size_t>(o)];
                }
        break;
    }
    case Op::concat0: {
        int64_t off = 0;
        for (int i : n.in) {
            const Tensor& t = V(i);
            if (wants(i)) {
                Tensor& g = G(i);
                for (int64_t k = 0; k < t.numel(); ++k)
                    g.v[static_cast<size_t>(k)] += n.grad.v[static_cast<size_t>(off + k)];
            }
            off += t.numel();
        }
        break;
    }
    case Op::slice0: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        int64_t inner = 1;
        for (size_t k = 1; k < gx.shape.size(); ++k) inner *= gx.shape[k];
        for (int64_t i = 0; i < n.grad.numel(); ++i)
            gx.v[static_cast<size_t>(n.stride * inner + i)] += n.grad.v[static_cast<size_t>(i)];
        break;
    }
    case Op::broadcast_hw: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const int hw = n.stride * n.pad;
        for (int c = 0; c < gx.dim(0); ++c) {
            float acc = 0.0f;
            for (int i = 0; i < hw; ++i) acc += n.grad.v[static_cast<size_t>(c) * hw + i];
            gx.v[static_cast<size_t>(c)] += acc;
        }
        break;
    }
    case Op::gap: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const int hw = gx.dim(1) * gx.dim(2);
        for (int c = 0; c < gx.dim(0); ++c) {
            const float g = n.grad.v[static_cast<size_t>(c)] / static_cast<float>(hw);
            for (int i = 0; i < hw; ++i) gx.v[static_cast<size_t>(c) * hw + i] += g;
        }
        break;
    }
    case Op::flatten:
    case Op::reshape: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        for (int64_t i = 0; i < gx.numel(); ++i) gx.v[static_cast<size_t>(i)] += n.grad.v[static_cast<size_t>(i)];
        break;
    }
    case Op::sum_all: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        for (auto& e : gx.v) e += n.grad.v[0];
        break;
    }
    case Op::cross_entropy: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const float g = n.grad.v[0];
        if (n.target_index >= 0) {
            for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += g * n.cache[i];
            gx.v[static_cast<size_t>(n.target_index)] -= g;
        } else {
            float tsum = 0.0f;
            for (float t : n.aux.v) tsum += t;
            for (size_t i = 0; i < gx.v.size(); ++i)
                gx.v[i] += g * (tsum * n.cache[i] - n.aux.v[i]);
        }
        break;
    }
    case Op::bce_logits:
    case Op::pixel_bce_logits: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const Tensor& lg = V(n.in[0]);
        const float g = n.grad.v[0] / static_cast<float>(lg.numel());
        for (size_t i = 0; i < gx.v.size(); ++i) {
            float s = 1.0f / (1.0f + std::exp(-lg.v[i]));
            gx.v[i] += g * (s - n.aux.v[i]);
        }
        break;
    }
    case Op::mse: {
        if (!wants(n.in[0])) break;
        Tensor& gx = G(n.in[0]);
        const Tensor& x = V(n.in[0]);
        const float g = 2.0f * n.grad.v[0] / static_cast<float>(x.numel());
        for (size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += g * (x.v[i] - n.aux.v[i]);
        break;
    }
    }
}

double Graph::kink_margin() const {
    double margin = 1e30;
    for (const Node& n : nodes_) {
        if (n.op == Op::relu) {
            const Tensor& x = nodes_[static_cast<size_t>(n.in[0])].val;
            for (float e : x.v) margin = std::min(margin, static_cast<double>(std::fabs(e)));
        } else if (n.op == Op::maxpool2) {
            const Tensor& x = nodes_[static_cast<size_t>(n.in[0])].val;
            for (int c = 0; c < n.val.dim(0); ++c)
                for (int y = 0; y < n.val.dim(1); ++y)
                    for (int xx = 0; xx < n.val.dim(2); ++xx) {
                        float best = -1e30f, second = -1e30f;
                        for (int k = 0; k < 4; ++k) {
                            const float v = x.at(c, 2 * y + (k >> 1), 2 * xx + (k & 1));
                            if (v > best) {
                                second = best;
                                best = v;
                            } else if (v > second) {
                                second = v;
                            }
                        }
                        margin = std::min(margin, static_cast<double>(best - second));
                    }
        }
    }
    return margin;
}

double Graph::replay_double(int node) const {
    std::vector<std::vector<double>> vals(static_cast<size_t>(node) + 1);
    auto V = [&](int i) -> const std::vector<double>& { return vals[static_cast<size_t>(i)]; };

    for (int id = 0; id <= node; ++id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        std::vector<double>& out = vals[static_cast<size_t>(id)];
        switch (n.op) {
        case Op::input: {
            out.assign(n.val.v.begin(), n.val.v.end());
            break;
        }
        case Op::param: {
            out.assign(n.prm->value.v.begin(), n.prm->value.v.end());
            break;
        }
        case Op::conv2d: {
            const Tensor& xs = nodes_[static_cast<size_t>(n.in[0])].val;
            const Tensor& ws = nodes_[static_cast<size_t>(n.in[1])].val;
            const int cin = xs.dim(0), h = xs.dim(1), w = xs.dim(2);
            const int cout = ws.dim(0), kh = ws.dim(2), kw = ws.dim(3);
            const int ho = n.val.dim(1), wo = n.val.dim(2);
            const auto& x = V(n.in[0]);
            const auto& wv = V(n.in[1]);
            out.assign(static_cast<size_t>(cout) * ho * wo, 0.0);
            for (int co = 0; co < cout; ++co)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        double acc = n.in[2] >= 0 ? V(n.in[2])[static_cast<size_t>(co)] : 0.0;
                        for (int ci = 0; ci < cin; ++ci)
                            for (int ky = 0; ky < kh; ++ky)
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int iy = oy * n.stride - n.pad + ky;
                                    const int ix = ox * n.stride - n.pad + kx;
                                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                    acc += x[(static_cast<size_t>(ci) * h + iy) * w + ix] *
                                           wv[((static_cast<size_t>(co) * cin + ci) * kh + ky) * kw + kx];
                                }
                        out[(static_cast<size_t>(co) * ho + oy) * wo + ox] = acc;
                    }
            break;
        }
        case Op::fc: {
            const Tensor& ws = nodes_[static_cast<size_t>(n.in[1])].val;
            const int m = ws.dim(0), k = ws.dim(1);
            const auto& x = V(n.in[0]);
            const auto& wv = V(n.in[1]);
            out.assign(static_cast<size_t>(m), 0.0);
            for (int i = 0; i < m; ++i) {
                double acc = n.in[2] >= 0 ? V(n.in[2])[static_cast<size_t>(i)] : 0.0;
                for (int j = 0; j < k; ++j) acc += wv[static_cast<size_t>(i) * k + j] * x[static_cast<size_t>(j)];
                out[static_cast<size_t>(i)] = acc;
            }
            break;
        }
        case Op::relu:
            out = V(n.in[0]);
            for (auto& e : out) e = e > 0.0 ? e : 0.0;
            break;
        case Op::sigmoid:
            out = V(n.in[0]);
            for (auto& e : out) e = 1.0 / (1.0 + std::exp(-e));
            break;
        case Op::add: {
            out = V(n.in[0]);
            const auto& b = V(n.in[1]);
            for (size_t i = 0; i < out.size(); ++i) out[i] += b[i];
            break;
        }
        case Op::mul: {
            out = V(n.in[0]);
            const auto& b = V(n.in[1]);
            for (size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
            break;
        }
        case Op::smul: {
            out = V(n.in[1]);
            for (auto& e : out) e *= V(n.in[0])[0];
            break;
        }
        case Op::scale_add: {
            out = V(n.in[0]);
            const auto& b = V(n.in[1]);
            for (size_t i = 0; i < out.size(); ++i) out[i] += static_cast<double>(n.calpha) * b[i];
            break;
        }
        case Op::upsample2x: {
            const Tensor& xs = nodes_[static_cast<size_t>(n.in[0])].val;
            const int c = xs.dim(0), h = xs.dim(1), w = xs.dim(2);
            const auto& x = V(n.in[0]);
            out.assign(static_cast<size_t>(c) * 4 * h * w, 0.0);
            for (int cc = 0; cc < c; ++cc)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        out[(static_cast<size_t>(cc) * 2 * h + y) * 2 * w + xx] =
                            x[(static_cast<size_t>(cc) * h + y / 2) * w + xx / 2];
            break;
        }
        case Op::maxpool2: {
            const Tensor& xs = nodes_[static_cast<size_t>(n.in[0])].val;
            const int c = xs.dim(0), h = xs.dim(1), w = xs.dim(2);
            const auto& x = V(n.in[0]);
            out.assign(static_cast<size_t>(c) * (h / 2) * (w / 2), 0.0);
            size_t o = 0;
            for (int cc = 0; cc < c; ++cc)
                for (int y = 0; y < h / 2; ++y)
                    for (int xx = 0; xx < w / 2; ++xx, ++o) {
                        double best = x[(static_cast<size_t>(cc) * h + 2 * y) * w + 2 * xx];
                        for (int k = 1; k < 4; ++k) {
                            double cand = x[(static_cast<size_t>(cc) * h + 2 * y + (k >> 1)) * w + 2 * xx + (k & 1)];
                            if (cand > best) best = cand;
                        }
                        out[o] = best;
                    }
            break;
        }
        case Op::concat0: {
            for (int i : n.in) out.insert(out.end(), V(i).begin(), V(i).end());
            break;
        }
        case Op::slice0: {
            const Tensor& xs = nodes_[static_cast<size_t>(n.in[0])].val;
            int64_t inner = 1;
            for (size_t k = 1; k < xs.shape.size(); ++k) inner *= xs.shape[k];
            const auto& x = V(n.in[0]);
            out.assign(x.begin() + n.stride * inner, x.begin() + (n.stride + n.pad) * inner);
            break;
        }
        case Op::broadcast_hw: {
            const auto& x = V(n.in[0]);
            const int hw = n.stride * n.pad;
            out.assign(x.size() * static_cast<size_t>(hw), 0.0);
            for (size_t cidx = 0; cidx < x.size(); ++cidx)
                for (int i = 0; i < hw; ++i) out[cidx * static_cast<size_t>(hw) + i] = x[cidx];
            break;
        }
        case Op::gap: {
            const Tensor& xs = nodes_[static_cast<size_t>(n.in[0])].val;
            const int c = xs.dim(0), hw = xs.dim(1) * xs.dim(2);
            const auto& x = V(n.in[0]);
            out.assign(static_cast<size_t>(c), 0.0);
            for (int cc = 0; cc < c; ++cc) {
                double acc = 0.0;
                for (int i = 0; i < hw; ++i) acc += x[static_cast<size_t>(cc) * hw + i];
                out[static_cast<size_t>(cc)] = acc / hw;
            }
            break;
        }
        case Op::flatten:
        case Op::reshape:
            out = V(n.in[0]);
            break;
        case Op::sum_all: {
            double acc = 0.0;
            for (double e : V(n.in[0])) acc += e;
            out.assign(1, acc);
            break;
        }
        case Op::cross_entropy: {
            const auto& lg = V(n.in[0]);
            double mx = lg[0];
            for (double e : lg) mx = std::max(mx, e);
            double z = 0.0;
            for (double e : lg) z += std::exp(e - mx);
            const double logz = std::log(z) + mx;
            double loss = 0.0;
            if (n.target_index >= 0) {
                loss = logz - lg[static_cast<size_t>(n.target_index)];
            } else {
                for (size_t i = 0; i < lg.size(); ++i)
                    loss += static_cast<double>(n.aux.v[i]) * (logz - lg[i]);
            }
            out.assign(1, loss);
            break;
        }
        case Op::bce_logits:
        case Op::pixel_bce_logits: {
            const auto& lg = V(n.in[0]);
            double acc = 0.0;
            for (size_t i = 0; i < lg.size(); ++i) {
                const double x = lg[i], t = n.aux.v[i];
                acc += std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
            }
            out.assign(1, acc / static_cast<double>(lg.size()));
            break;
        }
        case Op::mse: {
            const auto& x = V(n.in[0]);
            double acc = 0.0;
            for (size_t i = 0; i < x.size(); ++i) {
                const double d = x[i] - static_cast<double>(n.aux.v[i]);
                acc += d * d;
            }
            out.assign(1, acc / static_cast<double>(x.size()));
            break;
        }
        }
    }
    return vals[static_cast<size_t>(node)][0];
}

double grad_check(ParamStore& params, const std::function<int(Graph&)>& build, double epsilon) {
    params.zero_grad();
    Graph g;
    int loss = build(g);
    g.backward(loss);
    std::vector<std::vector<float>> analytic;
    for (auto& p : params.all()) analytic.push_back(p->grad.v);

    double worst = 0.0;
    size_t pi = 0;
    for (auto& p : params.all()) {
        if (!p->trainable) {
            ++pi;
            continue;
        }
        for (size_t i = 0; i < p->value.v.size(); ++i) {
            const float saved = p->value.v[i];
            // use the actually-stored float perturbations in the quotient
            const float f_up = static_cast<float>(saved + epsilon);
            const float f_dn = static_cast<float>(saved - epsilon);
            p->value.v[i] = f_up;
            const double up = g.replay_double(loss);
            p->value.v[i] = f_dn;
            const double dn = g.replay_double(loss);
            p->value.v[i] = saved;
            const double numeric = (up - dn) / (static_cast<double>(f_up) - static_cast<double>(f_dn));
            const double a = static_cast<double>(analytic[pi][i]);
            if (!std::isfinite(numeric) || !std::isfinite(a)) return 1e9;
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
        ++pi;
    }
    params.zero_grad();
    return worst;
}

} // namespace butd
