#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "butd/kernels.hpp"
#include "butd/tensor.hpp"

namespace butd {

// Named trainable tensor. Gradients accumulate across all use sites
// (shared weights between the two bottom-up passes rely on this).
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    int index = -1; // position in the owning store; addresses GradSink slots
};

// Per-worker gradient buffers, indexed like the parameter store. Workers
// accumulate here so batch-parallel training stays deterministic: the
// buffers are reduced into Parameter::grad in worker order.
using GradSink = std::vector<Tensor>;

// Registry of parameters owned by a model. Iteration order is the
// registration order, which keeps optimizer updates deterministic.
class ParamStore {
public:
    Parameter& add(const std::string& name, Tensor init, bool trainable = true);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grad();
    int64_t total_count() const;

    std::vector<std::unique_ptr<Parameter>>& all() { return params_; }
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, int> index_;
};

enum class Op {
    input,
    param,
    conv2d,
    fc,
    relu,
    sigmoid,
    add,
    mul,
    smul,       // 1-element scalar times tensor
    upsample2x, // nearest neighbor
    maxpool2,   // 2x2 stride 2
    concat0,    // concatenate along dim 0
    slice0,     // contiguous slice along dim 0
    broadcast_hw, // vector (C) -> map (C,H,W)
    gap,          // global average pool (C,H,W) -> (C)
    flatten,
    reshape,
    sum_all,
    cross_entropy,  // log-softmax inside, target class index or one-hot
    bce_logits,     // mean elementwise binary CE on logits
    pixel_bce_logits,
    mse,
    scale_add, // a + alpha*b with constant alpha
};

// Tape of op records in topological order (inputs always precede use).
// Forward values are computed eagerly as nodes are appended; backward
// fills gradient tensors and accumulates into Parameter::grad.
class Graph {
public:
    struct Node {
        Op op;
        std::vector<int> in;
        Tensor val;
        Tensor grad;
        bool needs_grad = false;
        // op attributes
        int stride = 1, pad = 0;
        int target_index = -1;
        float calpha = 1.0f;
        Tensor aux;                   // dense targets (bce/mse/one-hot ce)
        Parameter* prm = nullptr;     // param leaves
        std::vector<uint8_t> argsel;  // maxpool picks
        std::vector<float> cache;     // softmax probabilities etc.
    };

    int input(Tensor t);
    int param(Parameter& p);
    int conv2d(int x, int w, int b, int stride, int pad);
    int fc(int x, int w, int b);
    int relu(int x);
    int sigmoid(int x);
    int add(int a, int b);
    int mul(int a, int b);
    int smul(int scalar, int x);
    int scale_add(int a, int b, float alpha);
    int upsample2x(int x);
    int maxpool2(int x);
    int concat0(const std::vector<int>& xs);
    int slice0(int x, int offset, int len);
    int broadcast_hw(int x, int h, int w);
    int gap(int x);
    int flatten(int x);
    int reshape(int x, std::vector<int> shape);
    int sum_all(int x);
    int cross_entropy(int logits, int target_class);
    int cross_entropy_onehot(int logits, Tensor onehot);
    int bce_logits(int logits, Tensor target);
    int pixel_bce_logits(int logits, Tensor target);
    int mse(int pred, Tensor target);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].val; }
    const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
    int size() const { return static_cast<int>(nodes_.size()); }
    Op op(int id) const { return nodes_[static_cast<size_t>(id)].op; }
    const std::vector<int>& inputs(int id) const { return nodes_[static_cast<size_t>(id)].in; }

    // smallest distance of any relu input or maxpool decision to its kink;
    // finite-difference checks skip graphs where this is below the step
    double kink_margin() const;

    // Reverse pass from a scalar loss node. Parameter gradients are
    // accumulated (not overwritten), so several backward calls sum. When a
    // sink is given the gradients go there instead of Parameter::grad.
    void backward(int loss_node, GradSink* sink = nullptr);

    // Re-executes the recorded tape up to `node` in double precision,
    // reading parameter values live. Finite-difference checks run on this
    // path so their accuracy is not limited by float32 rounding.
    double replay_double(int node) const;

    // extra per-op finite checks, for tests and debugging
    void set_check_finite(bool on) { check_finite_ = on; }

private:
    int push(Node n);
    void compute(Node& n);
    void backprop(Node& n);
    Tensor& grad_buf(int id);

    std::vector<Node> nodes_;
    bool check_finite_ = false;
};

// Max relative gradient error over every trainable parameter scalar,
// comparing backward() against central differences. `build` must rebuild
// the graph from the current parameter values and return the loss node;
// difference quotients are accumulated in double.
double grad_check(ParamStore& params, const std::function<int(Graph&)>& build, double epsilon);

} // namespace butd
