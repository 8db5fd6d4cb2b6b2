#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcb/tensor.hpp"

namespace pcb::nn {

struct AdamConfig {
    float learning_rate = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
};

/// Zeroed moments shaped like `params`.
AdamState make_adam_state(std::span<Tensor* const> params, AdamConfig config = {});

/// Bias-corrected Adam update applied in place; increments state.step.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace pcb::nn
