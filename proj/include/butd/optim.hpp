#pragma once

#include <map>
#include <string>

#include "butd/graph.hpp"

namespace butd {

enum class OptKind { sgd_momentum, adam };

struct OptimizerConfig {
    OptKind kind = OptKind::adam;
    float lr = 1e-3f;
    float momentum = 0.9f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

// Moment buffers are keyed by parameter name and shape-checked on first
// use, so a state object survives checkpoint reloads of the same model.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    const OptimizerConfig& config() const { return cfg_; }

    // Applies one update from the accumulated gradients, then zeroes them.
    // `grad_scale` folds in the 1/batch factor.
    void step(ParamStore& params, float grad_scale = 1.0f);

private:
    struct Slot {
        Tensor m;
        Tensor v;
    };
    OptimizerConfig cfg_;
    std::map<std::string, Slot> slots_;
    int64_t t_ = 0;
};

} // namespace butd
