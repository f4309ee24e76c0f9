#include "rsm/adam.hpp"

#include <cmath>

#include "rsm/errors.hpp"

namespace rsm {

AdamState AdamState::for_param(const Tensor& param, float lr) {
    AdamState s;
    s.m = Tensor(param.shape());
    s.v = Tensor(param.shape());
    s.lr = lr;
    return s;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
    check_same_shape(param, grad, "adam_step");
    check_same_shape(param, state.m, "adam_step (moment m)");
    check_finite(grad, "adam_step gradient");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const float corr1 = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(state.beta1), t)));
    const float corr2 = static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(state.beta2), t)));
    const float b1 = state.beta1;
    const float b2 = state.beta2;
    const float lr = state.lr;
    const float eps = state.eps_hat;
    float* p = param.data();
    const float* g = grad.data();
    float* m = state.m.data();
    float* v = state.v.data();
    const int64_t n = param.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        const float m_hat = m[i] * corr1;
        const float v_hat = v[i] * corr2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

} // namespace rsm
