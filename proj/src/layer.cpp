#include "rsm/layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "rsm/errors.hpp"

namespace rsm {

void RsmConfig::validate() const {
    if (input_size < 1) throw ParameterError("RsmConfig: input_size must be >= 1");
    if (groups < 1 || cells < 1) throw ParameterError("RsmConfig: groups and cells must be >= 1");
    if (k < 1 || k > groups) throw ParameterError("RsmConfig: k must be in [1, groups]");
    if (gamma < 0.0f || gamma > 1.0f) throw ParameterError("RsmConfig: gamma outside [0,1]");
    if (epsilon < 0.0f || epsilon > 1.0f) throw ParameterError("RsmConfig: epsilon outside [0,1]");
    if (mu < 0.0f || mu >= 1.0f) throw ParameterError("RsmConfig: mu outside [0,1)");
    if (recurrent_dropout_p < 0.0f || recurrent_dropout_p >= 1.0f) {
        throw ParameterError("RsmConfig: recurrent dropout outside [0,1)");
    }
    if (feedback_size < 0) throw ParameterError("RsmConfig: feedback_size must be >= 0");
}

void RsmState::zero_row(int row) {
    const int gc = phi.cols2d();
    float* p = phi.data() + static_cast<int64_t>(row) * gc;
    float* q = psi.data() + static_cast<int64_t>(row) * gc;
    float* r = xR.data() + static_cast<int64_t>(row) * gc;
    std::memset(p, 0, sizeof(float) * static_cast<size_t>(gc));
    std::memset(q, 0, sizeof(float) * static_cast<size_t>(gc));
    std::memset(r, 0, sizeof(float) * static_cast<size_t>(gc));
}

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, Prng& rng) {
    Tensor t(std::move(shape));
    const float s = 1.0f / std::sqrt(static_cast<float>(fan_in));
    float* p = t.data();
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) p[i] = rng.uniform(-s, s);
    return t;
}

} // namespace

RsmParams init_params(const RsmConfig& cfg, Prng& rng) {
    cfg.validate();
    const int gc = cfg.cell_count();
    RsmParams p;
    p.wF = uniform_init({cfg.groups, cfg.input_size}, cfg.input_size, rng);
    p.wR = uniform_init({gc, gc}, gc, rng);
    if (cfg.feedback_size > 0) {
        p.wB = uniform_init({gc, cfg.feedback_size}, cfg.feedback_size, rng);
    }
    p.wD = uniform_init({cfg.input_size, cfg.groups}, cfg.groups, rng);
    return p;
}

RsmState reset_state(const RsmConfig& cfg, int batch) {
    cfg.validate();
    if (batch < 1) throw ParameterError("reset_state: batch must be >= 1");
    RsmState s;
    s.phi = Tensor({batch, cfg.groups, cfg.cells});
    s.psi = Tensor({batch, cfg.groups, cfg.cells});
    s.xR = Tensor({batch, cfg.cell_count()});
    return s;
}

Tensor recurrent_dropout(const Tensor& xR, float p, Prng& rng, bool training) {
    if (!training || p == 0.0f) return xR;
    return mul(xR, dropout_mask(xR.shape(), p, rng));
}

namespace detail {

RsmForwardTrace encode(const RsmParams& params, const RsmConfig& cfg, const RsmState& state,
                       const Tensor& xF, const Tensor* xB, bool training, Prng& rng,
                       RsmState& next_state) {
    const int g = cfg.groups;
    const int c = cfg.cells;
    const int gc = g * c;
    const int rows = xF.rows2d();
    if (xF.cols2d() != cfg.input_size) {
        throw DimensionError("forward: xF is " + shape_str(xF.shape()) + ", expected input size " +
                             std::to_string(cfg.input_size));
    }
    if (state.phi.rows2d() != rows || state.phi.cols2d() != gc) {
        throw DimensionError("forward: state does not match batch " + std::to_string(rows) +
                             " and layer size " + std::to_string(gc));
    }
    if (cfg.feedback_size > 0) {
        if (xB == nullptr || xB->rows2d() != rows || xB->cols2d() != cfg.feedback_size) {
            throw DimensionError("forward: feedback input missing or mis-shaped");
        }
    }

    RsmForwardTrace t;
    t.xF = xF;
    t.xR_used = recurrent_dropout(state.xR, cfg.recurrent_dropout_p, rng, training);
    if (cfg.feedback_size > 0) t.xB = *xB;

    t.zF = matmul(xF, transpose(params.wF));                       // [rows, g]
    t.zR = matmul(t.xR_used, transpose(params.wR)).with_shape({rows, g, c});
    if (cfg.feedback_size > 0) {
        t.zB = matmul(t.xB, transpose(params.wB)).with_shape({rows, g, c});
    }
    check_finite(t.zF, "forward: weighted sums (feed-forward product)");
    check_finite(t.zR, "forward: weighted sums (recurrent product)");
    if (!t.zB.empty()) check_finite(t.zB, "forward: weighted sums (feedback product)");

    // sigma_ij = zF_i + zR_ij + zB_ij, with zF broadcast across the cells of a group
    t.sigma = Tensor({rows, g, c});
    {
        const float* zf = t.zF.data();
        const float* zr = t.zR.data();
        const float* zb = t.zB.empty() ? nullptr : t.zB.data();
        float* s = t.sigma.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            for (int i = 0; i < g; ++i) {
                const float f = zf[static_cast<int64_t>(r) * g + i];
                const int64_t base = (static_cast<int64_t>(r) * g + i) * c;
                for (int j = 0; j < c; ++j) {
                    float v = f + zr[base + j];
                    if (zb) v += zb[base + j];
                    s[base + j] = v;
                }
            }
        }
    }
    check_finite(t.sigma, "forward: cell weighted sum (sigma)");

    // pi_ij = (1 - phi_ij) * (sigma_ij - min(sigma) + 1), min per sample
    t.pi = Tensor({rows, g, c});
    {
        const float* s = t.sigma.data();
        const float* ph = state.phi.data();
        float* pi = t.pi.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const int64_t base = static_cast<int64_t>(r) * gc;
            float mn = s[base];
            for (int u = 1; u < gc; ++u) mn = std::min(mn, s[base + u]);
            for (int u = 0; u < gc; ++u) {
                pi[base + u] = (1.0f - ph[base + u]) * (s[base + u] - mn + 1.0f);
            }
        }
    }
    check_finite(t.pi, "forward: inhibited activity (pi)");

    GroupMax pig = group_max(t.pi);
    t.piG = pig.values;                     // [rows, g]
    t.maskC = top_k_mask(t.pi, 1);          // most active cell per group
    t.maskG = top_k_mask(t.piG, cfg.k);     // most active groups per sample

    // y = tanh(sigma * maskG * maskC): raw sigma at the surviving cell, 0 elsewhere
    t.y = Tensor({rows, g, c});
    {
        const float* s = t.sigma.data();
        const float* mc = t.maskC.data();
        const float* mg = t.maskG.data();
        float* y = t.y.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            for (int i = 0; i < g; ++i) {
                if (mg[static_cast<int64_t>(r) * g + i] == 0.0f) continue;
                const int64_t base = (static_cast<int64_t>(r) * g + i) * c;
                for (int j = 0; j < c; ++j) {
                    if (mc[base + j] != 0.0f) y[base + j] = std::tanh(s[base + j]);
                }
            }
        }
    }
    check_finite(t.y, "forward: sparse activation (y)");

    next_state.phi = scale_max(state.phi, t.y, cfg.gamma);
    next_state.psi = scale_max(state.psi, t.y, cfg.epsilon);

    // xR = alpha * psi with alpha normalizing each row to sum 1 (0 if the row is all zero)
    t.alpha = Tensor({rows});
    next_state.xR = Tensor({rows, gc});
    {
        const float* ps = next_state.psi.data();
        float* xr = next_state.xR.data();
        float* al = t.alpha.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            const int64_t base = static_cast<int64_t>(r) * gc;
            float sum = 0.0f;
            for (int u = 0; u < gc; ++u) sum += ps[base + u];
            const float a = sum != 0.0f ? 1.0f / sum : 0.0f;
            al[r] = a;
            for (int u = 0; u < gc; ++u) xr[base + u] = a * ps[base + u];
        }
    }
    check_finite(next_state.xR, "forward: normalized recurrent input (xR)");

    GroupMax yg = group_max(t.y);
    t.yG = yg.values;                       // [rows, g]
    t.yG_argmax = std::move(yg.argmax);
    return t;
}

void grads_from_dyG(const RsmForwardTrace& trace, const Tensor& dyG, RsmGrads& out) {
    const int rows = trace.y.dim(0);
    const int g = trace.y.dim(1);
    const int c = trace.y.dim(2);

    // Route each group's gradient to its argmax cell; the local derivative is
    // tanh' = 1 - y^2 at that cell, and zero if the cell was masked out.
    Tensor dsigma({rows, g, c});
    {
        const float* dg = dyG.data();
        const float* y = trace.y.data();
        const float* mc = trace.maskC.data();
        const float* mg = trace.maskG.data();
        float* ds = dsigma.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            for (int i = 0; i < g; ++i) {
                const int64_t gi = static_cast<int64_t>(r) * g + i;
                const int j = trace.yG_argmax[static_cast<size_t>(gi)];
                const int64_t cell = gi * c + j;
                const float m = mg[gi] * mc[cell];
                if (m == 0.0f) continue;
                const float yv = y[cell];
                ds[cell] = dg[gi] * (1.0f - yv * yv) * m;
            }
        }
    }

    // dzF_i = sum_j dsigma_ij (zF is shared by the group's cells)
    Tensor dzF({rows, g});
    {
        const float* ds = dsigma.data();
        float* df = dzF.data();
#pragma omp parallel for schedule(static)
        for (int r = 0; r < rows; ++r) {
            for (int i = 0; i < g; ++i) {
                const int64_t base = (static_cast<int64_t>(r) * g + i) * c;
                float s = 0.0f;
                for (int j = 0; j < c; ++j) s += ds[base + j];
                df[static_cast<int64_t>(r) * g + i] = s;
            }
        }
    }

    out.wF = matmul(transpose(dzF), trace.xF);          // [g, input]
    out.wR = matmul(transpose(dsigma), trace.xR_used);  // [gc, gc]
    if (!trace.xB.empty()) {
        out.wB = matmul(transpose(dsigma), trace.xB);   // [gc, feedback]
    }
}

} // namespace detail

RsmForwardResult forward(const RsmParams& params, const RsmConfig& cfg, const RsmState& state,
                         const Tensor& xF, const Tensor* xB, bool training, Prng& rng) {
    RsmForwardResult res;
    res.trace = detail::encode(params, cfg, state, xF, xB, training, rng, res.state);
    res.trace.xHat = matmul(res.trace.yG, transpose(params.wD));   // [rows, input]
    check_finite(res.trace.xHat, "forward: decoded prediction (xHat)");
    return res;
}

RsmGrads loss_and_grads(const RsmForwardTrace& trace, const Tensor& target,
                        const RsmParams& params) {
    if (!trace.xHat.same_shape(target)) {
        throw DimensionError("loss_and_grads: target is " + shape_str(target.shape()) +
                             ", prediction is " + shape_str(trace.xHat.shape()));
    }
    const int rows = trace.xHat.rows2d();
    const int input = trace.xHat.cols2d();
    const float inv_n = 1.0f / static_cast<float>(static_cast<int64_t>(rows) * input);

    RsmGrads out;
    Tensor dXhat({rows, input});
    {
        const float* xh = trace.xHat.data();
        const float* tg = target.data();
        float* d = dXhat.data();
        const int64_t n = dXhat.numel();
        double loss = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const float e = xh[i] - tg[i];
            loss += static_cast<double>(e) * e;
            d[i] = 2.0f * e * inv_n;
        }
        out.loss = static_cast<float>(loss * inv_n);
    }

    out.wD = matmul(transpose(dXhat), trace.yG);        // [input, g]
    Tensor dyG = matmul(dXhat, params.wD);              // [rows, g]
    detail::grads_from_dyG(trace, dyG, out);
    return out;
}

void apply_forget(RsmState& state, const RsmConfig& cfg, Prng& rng) {
    if (cfg.mu == 0.0f) return;
    const int batch = state.batch();
    for (int r = 0; r < batch; ++r) {
        if (rng.bernoulli(cfg.mu)) state.zero_row(r);
    }
}

void forget_rows(RsmState& state, const std::vector<uint8_t>& rows) {
    const int batch = state.batch();
    if (static_cast<int>(rows.size()) != batch) {
        throw DimensionError("forget_rows: flag count does not match batch");
    }
    for (int r = 0; r < batch; ++r) {
        if (rows[static_cast<size_t>(r)]) state.zero_row(r);
    }
}

} // namespace rsm
