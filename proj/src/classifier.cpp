#include "rsm/classifier.hpp"

#include <cmath>
#include <string>

#include "rsm/errors.hpp"
#include "rsm/kernels.hpp"

namespace rsm {

MlpParams init_mlp(int input, int hidden, int labels, Prng& rng, float l2) {
    if (input < 1 || hidden < 1 || labels < 1) {
        throw ParameterError("init_mlp: layer sizes must be >= 1");
    }
    MlpParams p;
    const float s1 = 1.0f / std::sqrt(static_cast<float>(input));
    const float s2 = 1.0f / std::sqrt(static_cast<float>(hidden));
    p.w1 = Tensor({hidden, input});
    for (int64_t i = 0; i < p.w1.numel(); ++i) p.w1[i] = rng.uniform(-s1, s1);
    p.b1 = Tensor({hidden});
    p.w2 = Tensor({labels, hidden});
    for (int64_t i = 0; i < p.w2.numel(); ++i) p.w2[i] = rng.uniform(-s2, s2);
    p.b2 = Tensor({labels});
    p.l2 = l2;
    return p;
}

MlpAdam mlp_adam_for(const MlpParams& p, float lr) {
    MlpAdam a;
    a.w1 = AdamState::for_param(p.w1, lr);
    a.b1 = AdamState::for_param(p.b1, lr);
    a.w2 = AdamState::for_param(p.w2, lr);
    a.b2 = AdamState::for_param(p.b2, lr);
    return a;
}

MlpOutput classify(const MlpParams& p, const Tensor& features) {
    if (features.cols2d() != p.input_size()) {
        throw DimensionError("classify: features are " + shape_str(features.shape()) +
                             ", classifier expects input " + std::to_string(p.input_size()));
    }
    const int batch = features.rows2d();
    const int hidden = p.w1.dim(0);
    const int labels = p.labels();

    MlpOutput out;
    out.pre1 = matmul(features, transpose(p.w1));
    {
        float* d = out.pre1.data();
        const float* b = p.b1.data();
        for (int r = 0; r < batch; ++r) {
            for (int h = 0; h < hidden; ++h) d[static_cast<int64_t>(r) * hidden + h] += b[h];
        }
    }
    out.hidden = leaky_relu(out.pre1, p.leaky_slope);
    out.logits = matmul(out.hidden, transpose(p.w2));
    {
        float* d = out.logits.data();
        const float* b = p.b2.data();
        for (int r = 0; r < batch; ++r) {
            for (int l = 0; l < labels; ++l) d[static_cast<int64_t>(r) * labels + l] += b[l];
        }
    }
    // row-stable softmax
    out.probs = Tensor({batch, labels});
    {
        const float* lg = out.logits.data();
        float* pr = out.probs.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < batch; ++r) {
            const int64_t base = static_cast<int64_t>(r) * labels;
            float mx = lg[base];
            for (int l = 1; l < labels; ++l) mx = std::max(mx, lg[base + l]);
            float z = 0.0f;
            for (int l = 0; l < labels; ++l) {
                const float e = std::exp(lg[base + l] - mx);
                pr[base + l] = e;
                z += e;
            }
            const float inv = 1.0f / z;
            for (int l = 0; l < labels; ++l) pr[base + l] *= inv;
        }
    }
    return out;
}

MlpGrads mlp_loss_and_grads(const MlpParams& p, const Tensor& features,
                            const std::vector<int>& labels) {
    const int batch = features.rows2d();
    const int n_labels = p.labels();
    if (static_cast<int>(labels.size()) != batch) {
        throw DimensionError("mlp_loss_and_grads: label count does not match batch");
    }
    for (int lab : labels) {
        if (lab < 0 || lab >= n_labels) {
            throw ParameterError("mlp_loss_and_grads: label " + std::to_string(lab) +
                                 " out of range [0," + std::to_string(n_labels) + ")");
        }
    }
    MlpOutput fwd = classify(p, features);

    MlpGrads out;
    double ce = 0.0;
    Tensor dlogits({batch, n_labels});
    {
        const float* pr = fwd.probs.data();
        float* d = dlogits.data();
        const float inv_b = 1.0f / static_cast<float>(batch);
        for (int r = 0; r < batch; ++r) {
            const int64_t base = static_cast<int64_t>(r) * n_labels;
            const int lab = labels[static_cast<size_t>(r)];
            ce -= std::log(std::max(static_cast<double>(pr[base + lab]), 1e-30));
            for (int l = 0; l < n_labels; ++l) {
                d[base + l] = (pr[base + l] - (l == lab ? 1.0f : 0.0f)) * inv_b;
            }
        }
    }
    double penalty = 0.0;
    if (p.l2 > 0.0f) {
        for (int64_t i = 0; i < p.w1.numel(); ++i) penalty += static_cast<double>(p.w1[i]) * p.w1[i];
        for (int64_t i = 0; i < p.w2.numel(); ++i) penalty += static_cast<double>(p.w2[i]) * p.w2[i];
    }
    out.loss = static_cast<float>(ce / batch + p.l2 * penalty);

    out.w2 = matmul(transpose(dlogits), fwd.hidden);          // [labels, hidden]
    out.b2 = Tensor({n_labels});
    {
        const float* d = dlogits.data();
        float* b = out.b2.data();
        for (int r = 0; r < batch; ++r) {
            for (int l = 0; l < n_labels; ++l) b[l] += d[static_cast<int64_t>(r) * n_labels + l];
        }
    }
    Tensor dhidden = matmul(dlogits, p.w2);                   // [batch, hidden]
    const int hidden = p.w1.dim(0);
    Tensor dpre({batch, hidden});
    {
        const float* dh = dhidden.data();
        const float* pre = fwd.pre1.data();
        float* dp = dpre.data();
        const int64_t n = dpre.numel();
        for (int64_t i = 0; i < n; ++i) {
            dp[i] = pre[i] >= 0.0f ? dh[i] : dh[i] * p.leaky_slope;
        }
    }
    // Accumulate dw1 as (x^T * dpre)^T so sparse features skip rows cheaply.
    out.w1 = transpose(matmul(transpose(features), dpre));    // [hidden, input]
    out.b1 = Tensor({hidden});
    {
        const float* dp = dpre.data();
        float* b = out.b1.data();
        for (int r = 0; r < batch; ++r) {
            for (int h = 0; h < hidden; ++h) b[h] += dp[static_cast<int64_t>(r) * hidden + h];
        }
    }
    if (p.l2 > 0.0f) {
        const float two_l2 = 2.0f * p.l2;
        for (int64_t i = 0; i < out.w1.numel(); ++i) out.w1[i] += two_l2 * p.w1[i];
        for (int64_t i = 0; i < out.w2.numel(); ++i) out.w2[i] += two_l2 * p.w2[i];
    }
    return out;
}

float mlp_train_step(MlpParams& p, const Tensor& features, const std::vector<int>& labels,
                     MlpAdam& adam) {
    MlpGrads g = mlp_loss_and_grads(p, features, labels);
    adam_step(p.w1, g.w1, adam.w1);
    adam_step(p.b1, g.b1, adam.b1);
    adam_step(p.w2, g.w2, adam.w2);
    adam_step(p.b2, g.b2, adam.b2);
    return g.loss;
}

} // namespace rsm
