#include "rsm/conv.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rsm/errors.hpp"
#include "rsm/kernels.hpp"

namespace rsm {

void ConvGeometry::validate() const {
    if (field_h < 1 || field_w < 1) throw ParameterError("ConvGeometry: field dims must be >= 1");
    if (stride_h < 1 || stride_w < 1) throw ParameterError("ConvGeometry: strides must be >= 1");
    if (in_channels < 1) throw ParameterError("ConvGeometry: channels must be >= 1");
    if (in_h < field_h || in_w < field_w) {
        throw DimensionError("ConvGeometry: input smaller than the receptive field");
    }
    if (pool < 1) throw ParameterError("ConvGeometry: pool must be >= 1");
    if (out_h() % pool != 0 || out_w() % pool != 0) {
        throw ParameterError("ConvGeometry: pool " + std::to_string(pool) +
                             " does not divide output dims " + std::to_string(out_h()) + "x" +
                             std::to_string(out_w()));
    }
}

ConvRsmState conv_reset_state(const RsmConfig& cfg, const ConvGeometry& geom, int batch) {
    cfg.validate();
    geom.validate();
    ConvRsmState s;
    s.phi = Tensor({batch, geom.out_h(), geom.out_w(), cfg.groups, cfg.cells});
    s.psi = Tensor({batch, geom.out_h(), geom.out_w(), cfg.groups, cfg.cells});
    s.xR = Tensor({batch, geom.out_h(), geom.out_w(), cfg.cell_count()});
    return s;
}

Tensor im2col(const Tensor& image, const ConvGeometry& geom) {
    const int batch = image.dim(0);
    const int64_t expected = static_cast<int64_t>(geom.in_h) * geom.in_w * geom.in_channels;
    if (image.numel() / batch != expected) {
        throw DimensionError("im2col: image " + shape_str(image.shape()) +
                             " does not match geometry");
    }
    const int oh = geom.out_h(), ow = geom.out_w();
    const int patch = geom.patch_size();
    Tensor cols({batch * oh * ow, patch});
    const float* src = image.data();
    float* dst = cols.data();
    const int ch = geom.in_channels;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
        const float* img = src + static_cast<int64_t>(b) * geom.in_h * geom.in_w * ch;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                float* out = dst + ((static_cast<int64_t>(b) * oh + oy) * ow + ox) * patch;
                const int iy0 = oy * geom.stride_h;
                const int ix0 = ox * geom.stride_w;
                int t = 0;
                for (int fy = 0; fy < geom.field_h; ++fy) {
                    const float* row = img + (static_cast<int64_t>(iy0 + fy) * geom.in_w + ix0) * ch;
                    for (int fx = 0; fx < geom.field_w; ++fx) {
                        for (int c = 0; c < ch; ++c) out[t++] = row[fx * ch + c];
                    }
                }
            }
        }
    }
    return cols;
}

Tensor col2im_add(const Tensor& cols, const ConvGeometry& geom, int batch) {
    const int oh = geom.out_h(), ow = geom.out_w();
    const int patch = geom.patch_size();
    if (cols.rows2d() != batch * oh * ow || cols.cols2d() != patch) {
        throw DimensionError("col2im_add: columns " + shape_str(cols.shape()) +
                             " do not match geometry");
    }
    std::vector<int> out_shape = {batch, geom.in_h, geom.in_w, geom.in_channels};
    if (geom.in_channels == 1) out_shape = {batch, geom.in_h, geom.in_w};
    Tensor image(out_shape);
    const float* src = cols.data();
    float* dst = image.data();
    const int ch = geom.in_channels;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
        float* img = dst + static_cast<int64_t>(b) * geom.in_h * geom.in_w * ch;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const float* in = src + ((static_cast<int64_t>(b) * oh + oy) * ow + ox) * patch;
                const int iy0 = oy * geom.stride_h;
                const int ix0 = ox * geom.stride_w;
                int t = 0;
                for (int fy = 0; fy < geom.field_h; ++fy) {
                    float* row = img + (static_cast<int64_t>(iy0 + fy) * geom.in_w + ix0) * ch;
                    for (int fx = 0; fx < geom.field_w; ++fx) {
                        for (int c = 0; c < ch; ++c) row[fx * ch + c] += in[t++];
                    }
                }
            }
        }
    }
    return image;
}

Tensor feedback_interpolate(const Tensor& map, int target_h, int target_w) {
    if (map.rank() != 4) throw DimensionError("feedback_interpolate: expected [batch,h,w,d]");
    const int batch = map.dim(0), h2 = map.dim(1), w2 = map.dim(2), d = map.dim(3);
    if (target_h < 1 || target_w < 1) throw ParameterError("feedback_interpolate: bad target size");
    if (target_h == h2 && target_w == w2) return map;
    Tensor out({batch, target_h, target_w, d});
    const float* src = map.data();
    float* dst = out.data();
    const float sy = target_h > 1 ? static_cast<float>(h2 - 1) / (target_h - 1) : 0.0f;
    const float sx = target_w > 1 ? static_cast<float>(w2 - 1) / (target_w - 1) : 0.0f;
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
        for (int y = 0; y < target_h; ++y) {
            const float fy = y * sy;
            const int y0 = std::min(static_cast<int>(fy), h2 - 1);
            const int y1 = std::min(y0 + 1, h2 - 1);
            const float wy = fy - y0;
            for (int x = 0; x < target_w; ++x) {
                const float fx = x * sx;
                const int x0 = std::min(static_cast<int>(fx), w2 - 1);
                const int x1 = std::min(x0 + 1, w2 - 1);
                const float wx = fx - x0;
                const float* p00 = src + ((static_cast<int64_t>(b) * h2 + y0) * w2 + x0) * d;
                const float* p01 = src + ((static_cast<int64_t>(b) * h2 + y0) * w2 + x1) * d;
                const float* p10 = src + ((static_cast<int64_t>(b) * h2 + y1) * w2 + x0) * d;
                const float* p11 = src + ((static_cast<int64_t>(b) * h2 + y1) * w2 + x1) * d;
                float* o = dst + ((static_cast<int64_t>(b) * target_h + y) * target_w + x) * d;
                const float w00 = (1.0f - wy) * (1.0f - wx);
                const float w01 = (1.0f - wy) * wx;
                const float w10 = wy * (1.0f - wx);
                const float w11 = wy * wx;
                for (int c = 0; c < d; ++c) {
                    o[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
                }
            }
        }
    }
    return out;
}

Tensor pool_up(const Tensor& map, int pool) {
    if (map.rank() != 4) throw DimensionError("pool_up: expected [batch,h,w,d]");
    if (pool < 1) throw ParameterError("pool_up: pool must be >= 1");
    if (pool == 1) return map;
    const int batch = map.dim(0), h = map.dim(1), w = map.dim(2), d = map.dim(3);
    if (h % pool != 0 || w % pool != 0) {
        throw ParameterError("pool_up: pool " + std::to_string(pool) + " does not divide " +
                             std::to_string(h) + "x" + std::to_string(w));
    }
    const int ph = h / pool, pw = w / pool;
    Tensor out({batch, ph, pw, d});
    const float* src = map.data();
    float* dst = out.data();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < batch; ++b) {
        for (int y = 0; y < ph; ++y) {
            for (int x = 0; x < pw; ++x) {
                float* o = dst + ((static_cast<int64_t>(b) * ph + y) * pw + x) * d;
                for (int dy = 0; dy < pool; ++dy) {
                    for (int dx = 0; dx < pool; ++dx) {
                        const float* p = src + ((static_cast<int64_t>(b) * h + y * pool + dy) * w +
                                                x * pool + dx) * d;
                        if (dy == 0 && dx == 0) {
                            for (int c = 0; c < d; ++c) o[c] = p[c];
                        } else {
                            for (int c = 0; c < d; ++c) o[c] = std::max(o[c], p[c]);
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvForwardResult conv_forward(const RsmParams& params, const ConvGeometry& geom,
                               const RsmConfig& cfg, const ConvRsmState& state,
                               const Tensor& xF_image, const Tensor* xB_map,
                               bool training, Prng& rng) {
    geom.validate();
    if (cfg.input_size != geom.patch_size()) {
        throw DimensionError("conv_forward: config input_size " + std::to_string(cfg.input_size) +
                             " != receptive field size " + std::to_string(geom.patch_size()));
    }
    const int batch = xF_image.dim(0);
    const int oh = geom.out_h(), ow = geom.out_w();
    const int rows = batch * oh * ow;
    const int gc = cfg.cell_count();

    Tensor patches = im2col(xF_image, geom);

    Tensor xB_flat;
    if (cfg.feedback_size > 0) {
        if (xB_map == nullptr) throw DimensionError("conv_forward: feedback map missing");
        Tensor resized = feedback_interpolate(*xB_map, oh, ow);
        if (resized.dim(3) != cfg.feedback_size) {
            throw DimensionError("conv_forward: feedback depth mismatch");
        }
        xB_flat = resized.with_shape({rows, cfg.feedback_size});
    }

    // every filter position is an independent row of the dense layer
    RsmState flat;
    flat.phi = state.phi.with_shape({rows, cfg.groups, cfg.cells});
    flat.psi = state.psi.with_shape({rows, cfg.groups, cfg.cells});
    flat.xR = state.xR.with_shape({rows, gc});

    ConvForwardResult res;
    RsmState next_flat;
    res.trace = detail::encode(params, cfg, flat, patches,
                               cfg.feedback_size > 0 ? &xB_flat : nullptr, training, rng,
                               next_flat);

    res.state.phi = next_flat.phi.with_shape({batch, oh, ow, cfg.groups, cfg.cells});
    res.state.psi = next_flat.psi.with_shape({batch, oh, ow, cfg.groups, cfg.cells});
    res.state.xR = next_flat.xR.with_shape({batch, oh, ow, gc});
    res.xR_map = res.state.xR;

    // transposed convolution of the bottleneck with the shared decoder
    Tensor contrib = matmul(res.trace.yG, transpose(params.wD));   // [rows, patch]
    res.xHat = col2im_add(contrib, geom, batch);
    check_finite(res.xHat, "conv_forward: decoded prediction (xHat)");
    return res;
}

RsmGrads conv_loss_and_grads(const RsmForwardTrace& trace, const Tensor& xHat,
                             const Tensor& target_image, const ConvGeometry& geom,
                             const RsmParams& params) {
    check_same_shape(xHat, target_image, "conv_loss_and_grads");
    const int64_t n = xHat.numel();
    const float inv_n = 1.0f / static_cast<float>(n);
    const int batch = xHat.dim(0);

    RsmGrads out;
    Tensor dXhat(xHat.shape());
    {
        const float* xh = xHat.data();
        const float* tg = target_image.data();
        float* d = dXhat.data();
        double loss = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const float e = xh[i] - tg[i];
            loss += static_cast<double>(e) * e;
            d[i] = 2.0f * e * inv_n;
        }
        out.loss = static_cast<float>(loss * inv_n);
    }

    Tensor dContrib = im2col(dXhat, geom);                 // adjoint of col2im_add
    out.wD = matmul(transpose(dContrib), trace.yG);        // [patch, g]
    Tensor dyG = matmul(dContrib, params.wD);              // [rows, g]
    detail::grads_from_dyG(trace, dyG, out);
    return out;
}

void conv_apply_forget(ConvRsmState& state, const RsmConfig& cfg, Prng& rng) {
    if (cfg.mu == 0.0f) return;
    // forgetting wipes a whole sample (all positions), mirroring the dense layer
    const int batch = state.phi.dim(0);
    const int64_t row = state.phi.numel() / batch;
    for (int b = 0; b < batch; ++b) {
        if (!rng.bernoulli(cfg.mu)) continue;
        std::fill_n(state.phi.data() + b * row, row, 0.0f);
        std::fill_n(state.psi.data() + b * row, row, 0.0f);
        std::fill_n(state.xR.data() + b * row, row, 0.0f);
    }
}

ConvUnit ConvUnit::create(const RsmConfig& cfg, const ConvGeometry& geom, Prng& rng) {
    ConvUnit u;
    u.cfg = cfg;
    u.cfg.input_size = geom.patch_size();
    u.geom = geom;
    u.params = init_params(u.cfg, rng);
    u.adam_wF = AdamState::for_param(u.params.wF, cfg.lr);
    u.adam_wR = AdamState::for_param(u.params.wR, cfg.lr);
    if (!u.params.wB.empty()) u.adam_wB = AdamState::for_param(u.params.wB, cfg.lr);
    u.adam_wD = AdamState::for_param(u.params.wD, cfg.lr);
    return u;
}

void ConvUnit::reset(int batch) {
    state = conv_reset_state(cfg, geom, batch);
    has_pending = false;
}

float ConvUnit::train_pending(const Tensor& target_image) {
    if (!has_pending) return -1.0f;
    RsmGrads g = conv_loss_and_grads(pending_trace, pending_xHat, target_image, geom, params);
    adam_step(params.wF, g.wF, adam_wF);
    adam_step(params.wR, g.wR, adam_wR);
    if (!g.wB.empty()) adam_step(params.wB, g.wB, adam_wB);
    adam_step(params.wD, g.wD, adam_wD);
    has_pending = false;
    return g.loss;
}

void RsmStack::reset(int batch) {
    lower.reset(batch);
    if (upper) upper->reset(batch);
}

void RsmStack::drop_pending() {
    lower.has_pending = false;
    if (upper) upper->has_pending = false;
}

RsmStack::StepResult RsmStack::step(const Tensor& frame, bool train, Prng& rng) {
    StepResult out;
    if (train) out.lower_loss = lower.train_pending(frame);

    const Tensor* feedback = nullptr;
    Tensor upper_map;
    if (upper) {
        upper_map = upper->state.xR;   // previous-step upper encoding
        feedback = &upper_map;
    }
    ConvForwardResult lo = conv_forward(lower.params, lower.geom, lower.cfg, lower.state, frame,
                                        feedback, train, rng);
    lower.state = lo.state;
    out.prediction = lo.xHat;
    if (train) {
        lower.pending_trace = std::move(lo.trace);
        lower.pending_xHat = std::move(lo.xHat);
        lower.has_pending = true;
    }

    if (upper) {
        Tensor pooled = pool_up(lo.xR_map, lower.geom.pool);
        if (train) out.upper_loss = upper->train_pending(pooled);
        ConvForwardResult up = conv_forward(upper->params, upper->geom, upper->cfg, upper->state,
                                            pooled, nullptr, train, rng);
        upper->state = up.state;
        if (train) {
            upper->pending_trace = std::move(up.trace);
            upper->pending_xHat = std::move(up.xHat);
            upper->has_pending = true;
        }
    }
    return out;
}

std::vector<Tensor> self_loop_generate(RsmStack& stack, const std::vector<Tensor>& priming,
                                       int n_steps, Prng& rng) {
    if (priming.empty()) throw ParameterError("self_loop_generate: need at least one priming frame");
    Tensor last_prediction;
    for (const Tensor& f : priming) {
        last_prediction = stack.step(f, false, rng).prediction;
    }
    std::vector<Tensor> generated;
    generated.reserve(static_cast<size_t>(std::max(0, n_steps)));
    for (int s = 0; s < n_steps; ++s) {
        Tensor next = last_prediction;
        float* p = next.data();
        for (int64_t i = 0; i < next.numel(); ++i) p[i] = std::clamp(p[i], 0.0f, 1.0f);
        last_prediction = stack.step(next, false, rng).prediction;
        generated.push_back(std::move(next));
    }
    return generated;
}

} // namespace rsm
