#include "pcb/nn/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pcb/error.hpp"

namespace pcb::nn {

AdamState make_adam_state(std::span<Tensor* const> params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const Tensor* p : params) {
        s.first_moment.emplace_back(p->shape());
        s.second_moment.emplace_back(p->shape());
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size())
        throw ShapeError(fmt::format("adam_step: {} params, {} grads, {} moment slots", params.size(), grads.size(),
                                     state.first_moment.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.first_moment[i].shape() ||
            params[i]->shape() != state.second_moment[i].shape())
            throw ShapeError(fmt::format("adam_step: shape mismatch at parameter {}", i));
    }

    state.step += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step);
    const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta1), t));
    const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(c.beta2), t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        float* p = params[i]->ptr();
        const float* g = grads[i].ptr();
        float* m = state.first_moment[i].ptr();
        float* v = state.second_moment[i].ptr();
        const std::size_t n = params[i]->size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g[j] * g[j];
            const float m_hat = m[j] / bc1;
            const float v_hat = v[j] / bc2;
            p[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

}  // namespace pcb::nn
