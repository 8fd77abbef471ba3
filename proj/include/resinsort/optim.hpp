#pragma once

#include <span>
#include <vector>

#include "resinsort/tensor.hpp"

namespace resinsort {

/// Classical (Polyak) momentum: v <- momentum * v + g; p <- p - lr * v.
struct MomentumState {
    double learning_rate = 0.001;
    double momentum = 0.9;
    /// One buffer per parameter tensor; sized lazily on the first step.
    std::vector<Tensor> velocity;
};

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor> grads, MomentumState& state);

}  // namespace resinsort
