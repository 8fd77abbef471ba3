#include "resinsort/optim.hpp"

#include <stdexcept>
#include <string>

namespace resinsort {

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor> grads, MomentumState& state) {
    if (params.size() != grads.size()) {
        throw DimensionError("sgd step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    }
    if (!(state.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
    if (!(state.momentum >= 0.0 && state.momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");

    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const Tensor* p : params) state.velocity.emplace_back(p->shape());
    }
    if (state.velocity.size() != params.size()) {
        throw DimensionError("sgd step: momentum state tracks " + std::to_string(state.velocity.size()) +
                             " buffers for " + std::to_string(params.size()) + " parameters");
    }

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        Tensor& v = state.velocity[k];
        require_same_shape(p, grads[k], "sgd step gradient");
        require_same_shape(p, v, "sgd step velocity");
        for (std::size_t i = 0; i < p.size(); ++i) {
            v[i] = state.momentum * v[i] + grads[k][i];
            p[i] -= state.learning_rate * v[i];
        }
    }
}

}  // namespace resinsort
