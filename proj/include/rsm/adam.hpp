#pragma once

#include <cstdint>

#include "rsm/tensor.hpp"

namespace rsm {

// Adam with bias correction. One state per parameter tensor.
struct AdamState {
    Tensor m;
    Tensor v;
    int64_t step = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps_hat = 1e-8f;
    float lr = 0.0005f;

    static AdamState for_param(const Tensor& param, float lr = 0.0005f);
};

// In-place update of `param` from `grad`; advances `state.step` by one.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

} // namespace rsm
