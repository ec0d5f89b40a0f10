#include "butd/optim.hpp"

#include <cmath>

namespace butd {

void Optimizer::step(ParamStore& params, float grad_scale) {
    ++t_;
    for (auto& pp : params.all()) {
        Parameter& p = *pp;
        if (!p.trainable) continue;
        Slot& slot = slots_[p.name];
        if (slot.m.numel() == 0) {
            slot.m = Tensor(p.value.shape);
            if (cfg_.kind == OptKind::adam) slot.v = Tensor(p.value.shape);
        }
        check(slot.m.same_shape(p.value), "optimizer: moment buffer shape mismatch for " + p.name);

        if (cfg_.kind == OptKind::sgd_momentum) {
            for (size_t i = 0; i < p.value.v.size(); ++i) {
                float g = p.grad.v[i] * grad_scale + cfg_.weight_decay * p.value.v[i];
                slot.m.v[i] = cfg_.momentum * slot.m.v[i] + g;
                p.value.v[i] -= cfg_.lr * slot.m.v[i];
            }
        } else {
            const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
            const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
            for (size_t i = 0; i < p.value.v.size(); ++i) {
                float g = p.grad.v[i] * grad_scale + cfg_.weight_decay * p.value.v[i];
                slot.m.v[i] = cfg_.beta1 * slot.m.v[i] + (1.0f - cfg_.beta1) * g;
                slot.v.v[i] = cfg_.beta2 * slot.v.v[i] + (1.0f - cfg_.beta2) * g * g;
                const float mhat = slot.m.v[i] / bc1;
                const float vhat = slot.v.v[i] / bc2;
                p.value.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
        p.grad.fill(0.0f);
    }
}

} // namespace butd
